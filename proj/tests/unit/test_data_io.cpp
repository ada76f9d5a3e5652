#include <gtest/gtest.h>
#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <vector>

#include "ood/data_io.hpp"
#include "ood/error.hpp"
#include "oracles.hpp"

using namespace ood;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / "ooddiag_data_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 8),
          static_cast<unsigned char>(v)};
}

// Header plus pixels for `declared` images of 2x2, with `present` images of data.
std::vector<unsigned char> idx_fixture(std::uint32_t magic, std::uint32_t declared, std::size_t present) {
  std::vector<unsigned char> b;
  for (auto part : {be32(magic), be32(declared), be32(2), be32(2)}) b.insert(b.end(), part.begin(), part.end());
  for (std::size_t i = 0; i < present * 4; ++i) b.push_back(static_cast<unsigned char>(10 * i + 5));
  return b;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::data);
    return e.what();
  }
  ADD_FAILURE() << "expected an error";
  return {};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Dataset indices(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return Dataset(1, Measure::counting, std::move(v), {"indices", 0, "none"});
}

}  // namespace

TEST(Idx, TwoImageFixture) {
  const auto path = scratch("two.idx");
  const auto bytes = idx_fixture(0x00000803, 2, 2);
  ASSERT_EQ(bytes.size(), 16u + 8u);
  write_bytes(path, bytes);
  const auto d = load_idx({path, 2, 2, std::nullopt, Split::test});
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dim(), 4u);
  EXPECT_EQ(d.measure(), Measure::counting);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(d.values()[i], static_cast<double>(bytes[16 + i]));
}

TEST(Idx, BadMagic) {
  const auto path = scratch("magic.idx");
  write_bytes(path, idx_fixture(0x00000000, 2, 2));
  const auto msg = error_text([&] { load_idx({path, 2, 2}); });
  EXPECT_NE(msg.find("expected 0x00000803"), std::string::npos) << msg;
  EXPECT_NE(msg.find("found 0x00000000"), std::string::npos) << msg;
}

TEST(Idx, TruncationReportsOffset) {
  const auto path = scratch("short.idx");
  write_bytes(path, idx_fixture(0x00000803, 3, 2));
  const auto msg = error_text([&] { load_idx({path, 2, 2}); });
  // 3 images need 12 bytes from offset 16; the file ends at 16 + 8.
  EXPECT_NE(msg.find("from offset 16"), std::string::npos) << msg;
  EXPECT_NE(msg.find("byte offset 24"), std::string::npos) << msg;
  const auto header_only = scratch("header.idx");
  auto b = idx_fixture(0x00000803, 3, 0);
  b.resize(10);
  write_bytes(header_only, b);
  EXPECT_NE(error_text([&] { load_idx({header_only, 2, 2}); }).find("byte offset 8"), std::string::npos);
}

TEST(Idx, DimensionMismatch) {
  const auto path = scratch("dims.idx");
  write_bytes(path, idx_fixture(0x00000803, 2, 2));
  EXPECT_NE(error_text([&] { load_idx({path, 28, 28}); }).find("expected 28x28"), std::string::npos);
  EXPECT_FALSE(error_text([&] { load_idx({scratch("missing.idx"), 2, 2}); }).empty());
}

TEST(Idx, RoundTripIsBitIdentical) {
  std::vector<std::uint8_t> pixels(5 * 3 * 7);
  Rng rng(4);
  for (auto& p : pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const auto path = scratch("round.idx");
  write_idx_images(path, 3, 7, pixels);
  std::vector<std::uint8_t> labels = {1, 2, 3, 4, 9};
  const auto lpath = scratch("round.labels");
  write_idx_labels(lpath, labels);
  const auto d = load_idx({path, 3, 7, lpath});
  ASSERT_EQ(d.size(), 5u);
  for (std::size_t i = 0; i < pixels.size(); ++i) ASSERT_EQ(d.values()[i], pixels[i]);
  EXPECT_EQ(load_idx_labels(lpath), labels);
  // Header bytes match the format, independent of the reader.
  const auto raw = slurp(path);
  EXPECT_EQ(raw.size(), 16u + pixels.size());
  EXPECT_EQ(static_cast<unsigned char>(raw[3]), 0x03);
  EXPECT_EQ(static_cast<unsigned char>(raw[2]), 0x08);
  EXPECT_EQ(static_cast<unsigned char>(raw[7]), 5);
  const auto wrong = scratch("wrong.labels");
  write_idx_labels(wrong, std::vector<std::uint8_t>{1, 2});
  EXPECT_FALSE(error_text([&] { load_idx({path, 3, 7, wrong}); }).empty());
}

TEST(Idx, ReadsGzipCompressedFiles) {
  const auto bytes = idx_fixture(0x00000803, 2, 2);
  const auto path = scratch("two.idx.gz");
  gzFile f = gzopen(path.string().c_str(), "wb");
  ASSERT_NE(f, nullptr);
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
  const auto d = load_idx({path, 2, 2});
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.values()[7], static_cast<double>(bytes[23]));
}

TEST(Subsample, FullSizeIsPermutation) {
  const auto data = indices(500);
  const auto s = subsample(data, 500, 3);
  std::set<double> seen(s.values().begin(), s.values().end());
  EXPECT_EQ(seen.size(), 500u);
  EXPECT_EQ(s.provenance().seed, 3u);
}

TEST(Subsample, Deterministic) {
  const auto data = indices(1000);
  const auto a = subsample(data, 100, 9), b = subsample(data, 100, 9);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_THROW(subsample(data, 1001, 1), Error);
}

TEST(Subsample, OverlapIsHypergeometric) {
  const auto data = indices(60000);
  const auto h = oracle::hypergeometric_overlap(60000, 1000);
  EXPECT_NEAR(h.mean, 1000.0 * 1000.0 / 60000.0, 1e-9);
  RunningMoments overlaps;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto a = subsample(data, 1000, 2 * s + 1), b = subsample(data, 1000, 2 * s + 2);
    const std::set<double> sa(a.values().begin(), a.values().end());
    double overlap = 0;
    for (double v : b.values()) overlap += sa.count(v);
    EXPECT_LE(std::abs(overlap - h.mean), 4 * std::sqrt(h.var)) << "seed pair " << s;
    EXPECT_LT(overlap, 1000.0);
    overlaps.push(overlap);
  }
  EXPECT_LE(std::abs(overlaps.mean() - h.mean), 4 * std::sqrt(h.var / 40));
}

TEST(Csv, NineSignificantDigits) {
  EXPECT_EQ(format_csv_number(-0.918939), "-0.918939000");
  EXPECT_EQ(format_csv_number(1.0), "1.00000000");
  EXPECT_EQ(format_csv_number(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Csv, GoldenScoreFile) {
  ScoreSet s;
  s.detector_id = "likelihood";
  s.scores = {-0.918939, 1e-10, 12345.678, -std::numeric_limits<double>::infinity()};
  const auto path = scratch("scores.csv");
  export_csv(s, path);
  EXPECT_EQ(slurp(path), slurp(fs::path(OODDIAG_SOURCE_DIR) / "tests/golden/scores.csv"));
}

TEST(Csv, EmptyScoreSetIsHeaderOnly) {
  ScoreSet s;
  s.detector_id = "typicality";
  const auto path = scratch("empty.csv");
  export_csv(s, path);
  EXPECT_EQ(slurp(path), "index,score,detector_id\r\n");
}

TEST(Csv, RoundTripWithinTolerance) {
  ScoreSet s;
  s.detector_id = "likelihood-ratio";
  Rng rng(6);
  for (int i = 0; i < 200; ++i) s.scores.push_back(rng.normal() * std::pow(10.0, rng.normal() * 3));
  const auto path = scratch("rt.csv");
  export_csv(s, path);
  const auto t = read_csv(path);
  ASSERT_EQ(t.rows.size(), s.scores.size());
  EXPECT_EQ(t.header, (std::vector<std::string>{"index", "score", "detector_id"}));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(t.rows[i][0], std::to_string(i));
    const double v = std::stod(t.rows[i][1]);
    // Half a unit in the ninth significant digit.
    const double half_unit = 0.5 * std::pow(10.0, std::floor(std::log10(std::abs(s.scores[i]))) - 8);
    EXPECT_LE(std::abs(v - s.scores[i]), half_unit * (1 + 1e-12)) << t.rows[i][1];
  }
}

TEST(Csv, QuotingRoundTrips) {
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{"plain", "with,comma"}, {"say \"hi\"", "two\r\nlines"}, {"", "x"}};
  EXPECT_EQ(csv_escape("with,comma"), "\"with,comma\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  const auto back = parse_csv(to_csv(t));
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_THROW(parse_csv("a,\"open\r\n"), Error);
}

TEST(Files, WriteFailureNamesPath) {
  const auto bad = scratch("no_such_dir") / "sub" / "x.csv";
  const auto msg = error_text([&] { write_text_file(bad, "x"); });
  EXPECT_NE(msg.find("x.csv"), std::string::npos);
}
