#include "colorlab/cifar.hpp"

#include "colorlab/fetch.hpp"

#include <cstdlib>
#include <map>
#include <sstream>

namespace colorlab {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "' (train|test)");
}

RgbImage<float> Sample::image() const {
  RgbImage<float> img(kCifarSide, kCifarSide);
  const std::size_t plane = kCifarSide * kCifarSide;
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < kCifarSide; ++y)
      for (Index x = 0; x < kCifarSide; ++x)
        img.channels[c](y, x) = static_cast<float>(pixels[c * plane + y * kCifarSide + x]) / 255.0f;
  return img;
}

std::filesystem::path resolve_data_root(const std::optional<std::filesystem::path>& explicit_root,
                                        const std::filesystem::path& fallback) {
  if (explicit_root) return *explicit_root;
  if (const char* env = std::getenv("COLORLAB_DATA_DIR"); env && *env) return env;
  return fallback;
}

std::filesystem::path batch_directory(const std::filesystem::path& root) {
  if (std::filesystem::exists(root / kCifarBatchDir)) return root / kCifarBatchDir;
  return root;
}

std::vector<std::filesystem::path> split_files(const std::filesystem::path& root, Split split) {
  const auto dir = batch_directory(root);
  if (split == Split::Test) return {dir / "test_batch.bin"};
  std::vector<std::filesystem::path> files;
  for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  return files;
}

bool dataset_available(const std::filesystem::path& root) {
  for (Split s : {Split::Train, Split::Test})
    for (const auto& f : split_files(root, s))
      if (!std::filesystem::exists(f)) return false;
  return true;
}

Cifar10Reader::Cifar10Reader(std::vector<std::filesystem::path> files) : files_(std::move(files)) {}

bool Cifar10Reader::next(Sample& out) {
  while (true) {
    if (!stream_.is_open()) {
      if (file_ >= files_.size()) return false;
      const auto& path = files_[file_];
      if (!std::filesystem::exists(path)) throw DataError("missing CIFAR-10 file " + path.string());
      const auto size = std::filesystem::file_size(path);
      if (size == 0 || size % kCifarRecordBytes != 0)
        throw DataError(path.string() + " is truncated (" + std::to_string(size) + " bytes, not a multiple of 3073)");
      stream_.open(path, std::ios::binary);
      if (!stream_) throw DataError("cannot open " + path.string());
      record_in_file_ = 0;
    }
    char label = 0;
    if (!stream_.get(label)) {
      stream_.close();
      ++file_;
      continue;
    }
    if (!stream_.read(reinterpret_cast<char*>(out.pixels.data()), kCifarPixelBytes))
      throw DataError(files_[file_].string() + ": truncated record " + std::to_string(record_in_file_));
    const int l = static_cast<unsigned char>(label);
    if (l >= kCifarClasses)
      throw DataError(files_[file_].string() + ": label " + std::to_string(l) + " out of range in record " +
                      std::to_string(record_in_file_));
    out.label = l;
    out.index = index_++;
    ++record_in_file_;
    return true;
  }
}

namespace {

void verify_checksums(const std::filesystem::path& dir, const std::vector<std::filesystem::path>& files) {
  const auto manifest = dir / kCifarManifest;
  if (!std::filesystem::exists(manifest)) return;
  std::ifstream in(manifest);
  std::map<std::string, std::string> expected;
  std::string md5, name;
  while (in >> md5 >> name) expected[name] = md5;
  for (const auto& f : files) {
    const auto it = expected.find(f.filename().string());
    if (it == expected.end()) continue;
    if (md5_file(f) != it->second) throw DataError("checksum mismatch for " + f.string());
  }
}

}  // namespace

std::vector<Sample> load_cifar10(const DatasetSpec& spec) {
  const auto files = split_files(spec.root, spec.split);
  for (const auto& f : files) {
    if (!std::filesystem::exists(f)) throw DataError("missing CIFAR-10 file " + f.string());
    if (std::filesystem::file_size(f) % kCifarRecordBytes != 0) throw DataError(f.string() + " is truncated");
  }
  if (spec.verify_checksums) verify_checksums(batch_directory(spec.root), files);

  Cifar10Reader reader(files);
  std::vector<Sample> out;
  std::array<Index, kCifarClasses> per_class{};
  Sample s;
  while (reader.next(s)) {
    if (spec.per_class_cap > 0 && per_class[s.label] >= spec.per_class_cap) continue;
    ++per_class[s.label];
    out.push_back(s);
  }
  return out;
}

void write_cifar_file(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : samples) {
    out.put(static_cast<char>(s.label));
    out.write(reinterpret_cast<const char*>(s.pixels.data()), kCifarPixelBytes);
  }
}

}  // namespace colorlab
