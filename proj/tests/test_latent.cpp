// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dmix/error.hpp"
#include "dmix/latent.hpp"
#include "dmix/rng.hpp"

namespace dmix {
namespace {

LatentVideo iota_video(Dims d) {
    std::vector<double> v(d.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.25 * static_cast<double>(i) - 3.0;
    return LatentVideo(d, std::move(v));
}

TEST(Dims, Validation) {
    EXPECT_NO_THROW((Dims{1, 1, 1, 1}.validate()));
    EXPECT_THROW((Dims{0, 1, 1, 1}.validate()), InvalidShape);
    EXPECT_THROW((Dims{2, 1, 0, 3}.validate()), InvalidShape);
    EXPECT_EQ((Dims{8, 4, 32, 32}.size()), 8u * 4 * 32 * 32);
    EXPECT_EQ((Dims{8, 4, 32, 32}.single_frame()), (Dims{1, 4, 32, 32}));
    EXPECT_EQ((Dims{2, 3, 4, 5}.to_string()), "2x3x4x5");
}

TEST(LatentVideo, RejectsWrongLength) {
    EXPECT_THROW(LatentVideo(Dims{2, 1, 2, 2}, std::vector<double>(7)), InvalidShape);
    EXPECT_THROW(LatentVideo(Dims{0, 1, 2, 2}), InvalidShape);
}

TEST(LatentVideo, RowMajorLayout) {
    const Dims d{3, 2, 4, 5};
    const LatentVideo v = iota_video(d);
    for (std::size_t f = 0; f < d.frames; ++f)
        for (std::size_t c = 0; c < d.channels; ++c)
            for (std::size_t h = 0; h < d.height; ++h)
                for (std::size_t w = 0; w < d.width; ++w)
                    ASSERT_EQ(v.at(f, c, h, w), v[((f * 2 + c) * 4 + h) * 5 + w]);
    EXPECT_EQ(v.frame(1).data(), v.data().data() + d.frame_size());
}

TEST(LatentVideo, FiniteCheck) {
    LatentVideo v(Dims{1, 1, 1, 2}, 1.0);
    EXPECT_TRUE(v.all_finite());
    v[1] = std::nan("");
    EXPECT_FALSE(v.all_finite());
}

TEST(Reshape, RoundTripIsExact) {
    const LatentVideo v = iota_video(Dims{4, 2, 3, 3});
    const FrameBatch b = video_to_frames(v);
    ASSERT_EQ(b.count(), 4u);
    EXPECT_EQ(b.item_dims(), (Dims{1, 2, 3, 3}));
    for (std::size_t f = 0; f < 4; ++f) {
        const auto item = b.item(f);
        const auto frame = v.frame(f);
        ASSERT_TRUE(std::equal(item.begin(), item.end(), frame.begin(), frame.end()));
        EXPECT_EQ(b.item_video(f).dims(), (Dims{1, 2, 3, 3}));
    }
    EXPECT_EQ(frames_to_video(b), v);
    EXPECT_EQ(frames_to_video(video_to_frames(LatentVideo(v))), v);
}

TEST(Reshape, MoveKeepsBuffer) {
    LatentVideo v = iota_video(Dims{2, 1, 2, 2});
    const double* p = v.data().data();
    FrameBatch b = video_to_frames(std::move(v));
    EXPECT_EQ(b.data().data(), p);
    LatentVideo back = frames_to_video(std::move(b));
    EXPECT_EQ(back.data().data(), p);
}

TEST(Lvt, HeaderLayout) {
    const LatentVideo v(Dims{2, 3, 4, 5}, 1.5);
    const auto bytes = encode_lvt(v);
    ASSERT_EQ(bytes.size(), 24u + 4 * v.size());
    EXPECT_EQ(std::memcmp(bytes.data(), "LVT1", 4), 0);
    const std::uint8_t header[] = {4, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0, 5, 0, 0, 0};
    EXPECT_EQ(std::memcmp(bytes.data() + 4, header, sizeof header), 0);
    // 1.5f = 0x3fc00000, little-endian.
    const std::uint8_t value[] = {0x00, 0x00, 0xc0, 0x3f};
    EXPECT_EQ(std::memcmp(bytes.data() + 24, value, 4), 0);
}

TEST(Lvt, RoundTripRoundsToFloat) {
    RngStream rng(1, 0);
    const LatentVideo v = sample_standard_normal(Dims{3, 2, 2, 2}, rng);
    const LatentVideo back = decode_lvt(encode_lvt(v));
    ASSERT_EQ(back.dims(), v.dims());
    for (std::size_t i = 0; i < v.size(); ++i) {
        EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(v[i])));
    }
    EXPECT_EQ(encode_lvt(back), encode_lvt(v));
}

TEST(Lvt, RejectsMalformed) {
    const auto good = encode_lvt(LatentVideo(Dims{2, 1, 2, 2}, 0.0));
    auto bad = good;
    bad[0] = 'X';
    EXPECT_THROW(decode_lvt(bad), IoError);
    bad = good;
    bad[4] = 3;
    EXPECT_THROW(decode_lvt(bad), IoError);
    bad = good;
    bad.pop_back();
    EXPECT_THROW(decode_lvt(bad), IoError);
    bad = good;
    bad[8] = 0;
    EXPECT_THROW(decode_lvt(bad), IoError);
    bad = good;
    for (int i = 8; i < 24; ++i) bad[static_cast<std::size_t>(i)] = 0xff;
    EXPECT_THROW(decode_lvt(bad), IoError);
    EXPECT_THROW(decode_lvt(std::vector<std::uint8_t>(10, 0)), IoError);
}

TEST(Lvt, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "dmix_latent_test.lvt";
    const LatentVideo v = iota_video(Dims{2, 2, 2, 2});
    write_lvt(path, v);
    EXPECT_EQ(read_lvt(path), v);
    std::filesystem::remove(path);
    EXPECT_THROW(read_lvt(path), IoError);
}

}  // namespace
}  // namespace dmix
