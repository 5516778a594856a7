#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "cosal/checkpoint.hpp"

using namespace cosal;

namespace {

std::vector<CheckpointRecord> sample_records() {
    BasicTensor<float> a({2, 3}, std::vector<float>{1.5f, -2.0f, 0.0f, 3.25f, 1e-30f, -7.0f});
    BasicTensor<float> b({4}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f});
    return {{"enc0.weight", a}, {"enc0.bias", b}};
}

}  // namespace

TEST(Checkpoint, ByteLayoutIsLittleEndian) {
    const std::string buf = encode_checkpoint({{"w", BasicTensor<float>({1}, std::vector<float>{1.0f})}});
    ASSERT_EQ(buf.size(), 4u + 4 + 4 + 1 + 4 + 4 + 4);
    EXPECT_EQ(buf.substr(0, 4), "CSK1");
    EXPECT_EQ(std::uint8_t(buf[4]), 1);  // version 1, LE
    EXPECT_EQ(std::uint8_t(buf[7]), 0);
    EXPECT_EQ(std::uint8_t(buf[8]), 1);  // name length
    EXPECT_EQ(buf[12], 'w');
    EXPECT_EQ(std::uint8_t(buf[13]), 1);  // rank
    EXPECT_EQ(std::uint8_t(buf[17]), 1);  // extent
    // 1.0f = 0x3f800000
    EXPECT_EQ(std::uint8_t(buf[21]), 0x00);
    EXPECT_EQ(std::uint8_t(buf[23]), 0x80);
    EXPECT_EQ(std::uint8_t(buf[24]), 0x3f);
}

TEST(Checkpoint, RoundtripIsBitExact) {
    const auto recs = sample_records();
    const auto back = decode_checkpoint(encode_checkpoint(recs));
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(back[i].name, recs[i].name);
        EXPECT_EQ(back[i].tensor.shape(), recs[i].tensor.shape());
        EXPECT_EQ(std::memcmp(back[i].tensor.data(), recs[i].tensor.data(), recs[i].tensor.size() * 4), 0);
    }
}

TEST(Checkpoint, FileRoundtrip) {
    const auto path = std::filesystem::temp_directory_path() / "cosal_ckpt_test.csk";
    save_checkpoint(path.string(), sample_records());
    const auto back = load_checkpoint(path.string());
    EXPECT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].tensor, sample_records()[0].tensor);
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsBadMagic) {
    std::string buf = encode_checkpoint(sample_records());
    buf[0] = 'X';
    EXPECT_THROW(decode_checkpoint(buf), CheckpointError);
}

TEST(Checkpoint, RejectsUnknownVersion) {
    std::string buf = encode_checkpoint(sample_records());
    buf[4] = 9;
    EXPECT_THROW(decode_checkpoint(buf), CheckpointError);
}

TEST(Checkpoint, RejectsTruncation) {
    const std::string buf = encode_checkpoint(sample_records());
    for (std::size_t cut : {std::size_t{2}, std::size_t{6}, buf.size() - 1, buf.size() - 5})
        EXPECT_THROW(decode_checkpoint(buf.substr(0, cut)), CheckpointError) << cut;
}

TEST(Checkpoint, MissingFileIsAnError) {
    EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.csk"), CheckpointError);
}
