#pragma once

#include "colorlab/color_space.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace colorlab {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split { Train, Test };
Split parse_split(const std::string& s);

inline constexpr Index kCifarSide = 32;
inline constexpr Index kCifarClasses = 10;
inline constexpr std::size_t kCifarPixelBytes = 3 * 32 * 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarPixelBytes;
inline constexpr std::size_t kCifarRecordsPerFile = 10000;
inline constexpr const char* kCifarBatchDir = "cifar-10-batches-bin";
inline constexpr const char* kCifarManifest = "checksums.md5";

struct DatasetSpec {
  std::filesystem::path root;  // contains cifar-10-batches-bin/ (or is that directory)
  Split split = Split::Train;
  Index per_class_cap = 0;     // 0 keeps every image
  bool verify_checksums = true;

  Index expected_per_class() const { return split == Split::Train ? 5000 : 1000; }
};

/// One record: label byte then the R, G and B planes, each 32×32 row-major.
struct Sample {
  std::array<std::uint8_t, kCifarPixelBytes> pixels{};
  int label = 0;
  Index index = 0;  // position within the split

  RgbImage<float> image() const;
};

/// The dataset root: `explicit_root`, else COLORLAB_DATA_DIR, else `fallback`.
std::filesystem::path resolve_data_root(const std::optional<std::filesystem::path>& explicit_root,
                                        const std::filesystem::path& fallback = "data/cifar10");
std::filesystem::path batch_directory(const std::filesystem::path& root);
std::vector<std::filesystem::path> split_files(const std::filesystem::path& root, Split split);
bool dataset_available(const std::filesystem::path& root);

/// Sequential reader over the batch files of one split.
class Cifar10Reader {
 public:
  explicit Cifar10Reader(std::vector<std::filesystem::path> files);
  /// False at end of data.  Throws DataError on truncation or a bad label.
  bool next(Sample& out);

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t file_ = 0;
  std::size_t record_in_file_ = 0;
  Index index_ = 0;
  std::ifstream stream_;
};

/// Loads a split in file order, keeping the first `per_class_cap` images of
/// each class when a cap is set.  Verifies file sizes, labels and (when a
/// manifest written by fetch-data exists) MD5 checksums.
std::vector<Sample> load_cifar10(const DatasetSpec& spec);

/// Writes `samples` in the binary record format (used for fixtures and subsets).
void write_cifar_file(const std::filesystem::path& path, const std::vector<Sample>& samples);

}  // namespace colorlab
