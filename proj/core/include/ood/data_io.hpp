#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ood/dataset.hpp"
#include "ood/detectors.hpp"

namespace ood {

enum class Split { train, test };

struct ImageDatasetSpec {
  std::filesystem::path path;
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::optional<std::filesystem::path> label_path;
  Split split = Split::train;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads a big-endian IDX3 unsigned-byte image tensor (optionally gzip
/// compressed) into a counting-measure dataset with dim = rows * cols.
/// Errors name the expected and found magic, the truncation offset, or the
/// dimension mismatch.
Dataset load_idx(const ImageDatasetSpec& spec);

/// Reads an IDX1 unsigned-byte label vector.
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

/// Writes an IDX3 unsigned-byte image tensor; `pixels` holds n * rows * cols bytes.
void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Uniform sample of n rows without replacement (partial Fisher-Yates).
Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed);

/// A header plus rows of already-formatted cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Floats in CSV output: 9 significant digits, trailing zeros kept.
std::string format_csv_number(double value);

/// RFC 4180 quoting for a single cell.
std::string csv_escape(const std::string& cell);

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

/// Rows of (index, score, detector_id).
CsvTable score_table(const ScoreSet& scores);

void export_csv(const CsvTable& table, const std::filesystem::path& path);
void export_csv(const ScoreSet& scores, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);

/// Writes text to a file, throwing a data error naming the path on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ood
