#include "ood/data_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "ood/error.hpp"
#include "ood/rng.hpp"

namespace ood {

namespace {

struct GzCloser {
  void operator()(gzFile_s* f) const noexcept { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

GzHandle open_gz(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) fail(ErrorCode::data, "cannot open IDX file '" + path.string() + "'");
  return GzHandle(f);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

class IdxReader {
 public:
  explicit IdxReader(const std::filesystem::path& path) : path_(path), handle_(open_gz(path)) {}

  // Reads up to `count` bytes, returning how many arrived.
  std::size_t read_some(unsigned char* out, std::size_t count) {
    std::size_t got = 0;
    while (got < count) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(count - got, 1u << 20));
      const int rc = gzread(handle_.get(), out + got, chunk);
      if (rc < 0) fail(ErrorCode::data, "read error in IDX file '" + path_.string() + "'");
      if (rc == 0) break;
      got += static_cast<std::size_t>(rc);
    }
    offset_ += got;
    return got;
  }

  std::uint32_t read_u32(const char* field) {
    unsigned char b[4];
    const std::size_t start = offset_;
    if (read_some(b, 4) != 4)
      fail(ErrorCode::data, "truncated IDX file '" + path_.string() + "': " + field + " at byte offset " +
                                std::to_string(start) + ", file ends at byte offset " + std::to_string(offset_));
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

  void expect_magic(std::uint32_t expected) {
    const std::uint32_t found = read_u32("magic number");
    if (found != expected)
      fail(ErrorCode::data, "bad IDX magic in '" + path_.string() + "': expected " + hex32(expected) + ", found " +
                                hex32(found));
  }

  std::vector<std::uint8_t> read_payload(std::size_t expected, const std::string& what) {
    std::vector<std::uint8_t> data;
    const std::size_t start = offset_;
    constexpr std::size_t kChunk = 1u << 20;
    while (data.size() < expected) {
      const std::size_t want = std::min(kChunk, expected - data.size());
      const std::size_t old = data.size();
      data.resize(old + want);
      const std::size_t got = read_some(data.data() + old, want);
      if (got < want) {
        data.resize(old + got);
        fail(ErrorCode::data, "truncated IDX file '" + path_.string() + "': header declares " + what + " (" +
                                  std::to_string(expected) + " bytes from offset " + std::to_string(start) +
                                  ") but data ends at byte offset " + std::to_string(offset_));
      }
    }
    return data;
  }

 private:
  std::filesystem::path path_;
  GzHandle handle_;
  std::size_t offset_ = 0;
};

void put_u32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) fail(ErrorCode::data, "cannot open '" + path.string() + "' for writing");
  return os;
}

}  // namespace

Dataset load_idx(const ImageDatasetSpec& spec) {
  IdxReader reader(spec.path);
  reader.expect_magic(kIdxImageMagic);
  const std::uint32_t n = reader.read_u32("image count");
  const std::uint32_t rows = reader.read_u32("row count");
  const std::uint32_t cols = reader.read_u32("column count");
  if (rows != spec.rows || cols != spec.cols)
    fail(ErrorCode::data, "IDX file '" + spec.path.string() + "' holds " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " images, expected " + std::to_string(spec.rows) + "x" +
                              std::to_string(spec.cols));
  const std::size_t dim = std::size_t{rows} * cols;
  const auto pixels = reader.read_payload(std::size_t{n} * dim, std::to_string(n) + " images");

  if (spec.label_path) {
    const auto labels = load_idx_labels(*spec.label_path);
    if (labels.size() != n)
      fail(ErrorCode::data, "label file '" + spec.label_path->string() + "' has " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " images");
  }

  std::vector<double> values(pixels.begin(), pixels.end());
  Provenance prov{"idx(" + spec.path.filename().string() + (spec.split == Split::train ? ",train" : ",test") + ")", 0,
                  "file"};
  return Dataset(dim, Measure::counting, std::move(values), std::move(prov));
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  IdxReader reader(path);
  reader.expect_magic(kIdxLabelMagic);
  const std::uint32_t n = reader.read_u32("label count");
  return reader.read_payload(n, std::to_string(n) + " labels");
}

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
  const std::size_t dim = rows * cols;
  require(dim > 0 && pixels.size() % dim == 0, "write_idx_images: pixel count must be a multiple of rows*cols");
  auto os = open_out(path, std::ios::binary);
  put_u32(os, kIdxImageMagic);
  put_u32(os, static_cast<std::uint32_t>(pixels.size() / dim));
  put_u32(os, static_cast<std::uint32_t>(rows));
  put_u32(os, static_cast<std::uint32_t>(cols));
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!os) fail(ErrorCode::data, "failed writing '" + path.string() + "'");
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  auto os = open_out(path, std::ios::binary);
  put_u32(os, kIdxLabelMagic);
  put_u32(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!os) fail(ErrorCode::data, "failed writing '" + path.string() + "'");
}

Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed) {
  require(n <= data.size(), "subsample: requested " + std::to_string(n) + " rows from a dataset of " +
                                std::to_string(data.size()));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(data.size() - i));
    std::swap(order[i], order[j]);
  }
  order.resize(n);
  Provenance prov{"subsample(" + data.provenance().description + ", n=" + std::to_string(n) + ")", seed,
                  std::string(kGeneratorName)};
  return data.gather(order, std::move(prov));
}

std::string format_csv_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%#.9g", value);
  return buf;
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(cells[i]);
    }
    out += "\r\n";
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(cell));
      cell.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else {
      cell += c;
    }
  }
  if (quoted) fail(ErrorCode::data, "unterminated quoted CSV cell");
  if (any || !cell.empty() || !record.empty()) {
    record.push_back(std::move(cell));
    records.push_back(std::move(record));
  }
  CsvTable table;
  if (records.empty()) return table;
  table.header = std::move(records.front());
  table.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return table;
}

CsvTable score_table(const ScoreSet& scores) {
  CsvTable table;
  table.header = {"index", "score", "detector_id"};
  table.rows.reserve(scores.scores.size());
  for (std::size_t i = 0; i < scores.scores.size(); ++i)
    table.rows.push_back({std::to_string(i), format_csv_number(scores.scores[i]), scores.detector_id});
  return table;
}

void export_csv(const CsvTable& table, const std::filesystem::path& path) { write_text_file(path, to_csv(table)); }

void export_csv(const ScoreSet& scores, const std::filesystem::path& path) { export_csv(score_table(scores), path); }

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text_file(path)); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto os = open_out(path, std::ios::binary);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.close();
  if (!os) fail(ErrorCode::data, "failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::data, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace ood
