#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace colorlab {

inline constexpr const char* kCifarUrl = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz";
inline constexpr const char* kCifarArchiveMd5 = "c32a1d4ab5d03f1284b67883e8d87530";

std::string md5_file(const std::filesystem::path& path);

/// Extracts regular files from a gzip-compressed ustar archive; returns the
/// paths written.
std::vector<std::filesystem::path> extract_tar_gz(const std::filesystem::path& archive,
                                                  const std::filesystem::path& destination);

struct FetchOptions {
  std::filesystem::path root;
  std::string url = kCifarUrl;
  std::string archive_md5 = kCifarArchiveMd5;
  bool keep_archive = false;
};

struct FetchResult {
  bool already_present = false;
  std::vector<std::filesystem::path> files;
};

/// Downloads, verifies and unpacks CIFAR-10 (binary version) under
/// options.root, then writes an MD5 manifest of the batch files.  A second
/// call with a valid manifest in place does nothing.  Throws DataError.
FetchResult fetch_cifar10(const FetchOptions& options);

/// True when every file listed in the manifest exists and matches.
bool verify_manifest(const std::filesystem::path& batch_dir);

}  // namespace colorlab
