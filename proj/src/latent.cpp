// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/latent.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dmix/error.hpp"

namespace dmix {

void Dims::validate() const {
    if (frames == 0 || channels == 0 || height == 0 || width == 0) {
        throw InvalidShape("every dimension must be >= 1, got " + to_string());
    }
}

std::string Dims::to_string() const {
    return std::to_string(frames) + "x" + std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
}

LatentVideo::LatentVideo(Dims dims, double fill) : dims_(dims) {
    dims_.validate();
    data_.assign(dims_.size(), fill);
}

LatentVideo::LatentVideo(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    dims_.validate();
    if (data_.size() != dims_.size()) {
        throw InvalidShape("data length " + std::to_string(data_.size()) + " does not match dims " +
                           dims_.to_string());
    }
}

bool LatentVideo::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

FrameBatch::FrameBatch(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    dims_.validate();
    if (data_.size() != dims_.size()) {
        throw InvalidShape("data length " + std::to_string(data_.size()) + " does not match dims " +
                           dims_.to_string());
    }
}

LatentVideo FrameBatch::item_video(std::size_t b) const {
    const auto src = item(b);
    return LatentVideo(item_dims(), std::vector<double>(src.begin(), src.end()));
}

FrameBatch video_to_frames(LatentVideo&& v) {
    const Dims dims = v.dims();
    return FrameBatch(dims, std::move(v).release());
}

FrameBatch video_to_frames(const LatentVideo& v) {
    return video_to_frames(LatentVideo(v));
}

LatentVideo frames_to_video(FrameBatch&& b) {
    const Dims dims = b.dims_;
    return LatentVideo(dims, std::move(b.data_));
}

LatentVideo frames_to_video(const FrameBatch& b) {
    return frames_to_video(FrameBatch(b));
}

LatentVideo sample_standard_normal(const Dims& dims, RngStream& rng) {
    dims.validate();
    std::vector<double> data(dims.size());
    for (double& x : data) {
        x = rng.normal();
    }
    return LatentVideo(dims, std::move(data));
}

namespace {

constexpr char kMagic[4] = {'L', 'V', 'T', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
    }
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_lvt(const LatentVideo& v) {
    const Dims& d = v.dims();
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + 4 * v.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, 4);
    for (std::size_t dim : {d.frames, d.channels, d.height, d.width}) {
        put_u32(out, static_cast<std::uint32_t>(dim));
    }
    for (double x : v.data()) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
    return out;
}

LatentVideo decode_lvt(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw IoError("not an LVT1 stream");
    }
    if (const auto rank = get_u32(bytes, 4); rank != 4) {
        throw IoError("unsupported LVT rank " + std::to_string(rank));
    }
    const Dims dims{get_u32(bytes, 8), get_u32(bytes, 12), get_u32(bytes, 16), get_u32(bytes, 20)};
    if (dims.size() == 0) {
        throw IoError("LVT header has a zero dimension: " + dims.to_string());
    }
    const std::size_t payload_values = (bytes.size() - kHeaderBytes) / 4;
    std::size_t expected = 1;
    for (std::size_t dim : {dims.frames, dims.channels, dims.height, dims.width}) {
        if (expected > payload_values / dim + 1) {
            throw IoError("LVT header dims " + dims.to_string() + " exceed the payload");
        }
        expected *= dim;
    }
    if (bytes.size() != kHeaderBytes + 4 * expected) {
        throw IoError("LVT payload length does not match header dims " + dims.to_string());
    }
    std::vector<double> data(dims.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i));
    }
    return LatentVideo(dims, std::move(data));
}

void write_lvt(const std::filesystem::path& path, const LatentVideo& v) {
    const auto bytes = encode_lvt(v);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

LatentVideo read_lvt(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_lvt(bytes);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace dmix
