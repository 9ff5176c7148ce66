// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmix/rng.hpp"

namespace dmix {

/// Shape of a rank-4 latent tensor, row-major (f, c, h, w).
struct Dims {
    std::size_t frames = 1;
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t size() const noexcept { return frames * channels * height * width; }
    std::size_t frame_size() const noexcept { return channels * height * width; }
    std::size_t plane_size() const noexcept { return height * width; }

    /// Same spatial layout with a single frame.
    Dims single_frame() const noexcept { return {1, channels, height, width}; }

    /// Throws InvalidShape if any dimension is zero.
    void validate() const;

    std::string to_string() const;

    friend bool operator==(const Dims&, const Dims&) = default;
};

/// A (noisy) latent video sample of shape F x C x H x W.
class LatentVideo {
public:
    LatentVideo() = default;
    explicit LatentVideo(Dims dims, double fill = 0.0);
    LatentVideo(Dims dims, std::vector<double> data);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>&& release() && noexcept { return std::move(data_); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t index(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return ((f * dims_.channels + c) * dims_.height + h) * dims_.width + w;
    }
    double& at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[index(f, c, h, w)];
    }
    double at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[index(f, c, h, w)];
    }

    std::span<double> frame(std::size_t f) noexcept {
        return std::span<double>(data_).subspan(f * dims_.frame_size(), dims_.frame_size());
    }
    std::span<const double> frame(std::size_t f) const noexcept {
        return std::span<const double>(data_).subspan(f * dims_.frame_size(), dims_.frame_size());
    }

    bool all_finite() const noexcept;

    friend bool operator==(const LatentVideo&, const LatentVideo&) = default;

private:
    Dims dims_{};
    std::vector<double> data_;
};

/// The frames of a video viewed as a batch of independent single-frame
/// latents: item b holds time slice f = b. Storage layout is identical to
/// LatentVideo, so the conversions below move the buffer without copying.
class FrameBatch {
public:
    FrameBatch() = default;
    FrameBatch(Dims dims, std::vector<double> data);

    /// Number of items. Equals dims().frames.
    std::size_t count() const noexcept { return dims_.frames; }
    const Dims& dims() const noexcept { return dims_; }
    Dims item_dims() const noexcept { return dims_.single_frame(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::span<double> item(std::size_t b) noexcept {
        return std::span<double>(data_).subspan(b * dims_.frame_size(), dims_.frame_size());
    }
    std::span<const double> item(std::size_t b) const noexcept {
        return std::span<const double>(data_).subspan(b * dims_.frame_size(), dims_.frame_size());
    }

    /// Copy of item b as a one-frame LatentVideo.
    LatentVideo item_video(std::size_t b) const;

    friend bool operator==(const FrameBatch&, const FrameBatch&) = default;

private:
    friend LatentVideo frames_to_video(FrameBatch&& batch);

    Dims dims_{};
    std::vector<double> data_;
};

FrameBatch video_to_frames(LatentVideo&& v);
FrameBatch video_to_frames(const LatentVideo& v);
LatentVideo frames_to_video(FrameBatch&& b);
LatentVideo frames_to_video(const FrameBatch& b);

/// I.i.d. standard normal entries, drawn in row-major order.
LatentVideo sample_standard_normal(const Dims& dims, RngStream& rng);

/// Encodes a tensor as an .lvt byte string: "LVT1", u32 rank (4), four u32
/// dims, then f32 values; all little-endian.
std::vector<std::uint8_t> encode_lvt(const LatentVideo& v);
LatentVideo decode_lvt(std::span<const std::uint8_t> bytes);

void write_lvt(const std::filesystem::path& path, const LatentVideo& v);
LatentVideo read_lvt(const std::filesystem::path& path);

}  // namespace dmix
