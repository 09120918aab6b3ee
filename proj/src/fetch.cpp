#include "colorlab/fetch.hpp"

#include "colorlab/cifar.hpp"

#include <curl/curl.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace colorlab {

std::string md5_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_md5(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

namespace {

bool tar_checksum_ok(const std::array<char, 512>& header) {
  unsigned sum = 0;
  for (std::size_t i = 0; i < header.size(); ++i)
    sum += (i >= 148 && i < 156) ? unsigned(' ') : static_cast<unsigned char>(header[i]);
  const std::string field(header.data() + 148, strnlen(header.data() + 148, 8));
  return std::strtoul(field.c_str(), nullptr, 8) == sum;
}

}  // namespace

std::vector<std::filesystem::path> extract_tar_gz(const std::filesystem::path& archive,
                                                  const std::filesystem::path& destination) {
  std::unique_ptr<gzFile_s, decltype(&gzclose)> gz(gzopen(archive.c_str(), "rb"), &gzclose);
  if (!gz) throw DataError("cannot open archive " + archive.string());
  auto read_block = [&](char* dst, unsigned size) {
    int got = gzread(gz.get(), dst, size);
    if (got < 0) throw DataError("corrupt gzip stream in " + archive.string());
    return static_cast<unsigned>(got);
  };

  std::vector<std::filesystem::path> written;
  std::array<char, 512> header{};
  std::vector<char> body;
  while (true) {
    const unsigned got = read_block(header.data(), 512);
    if (gzdirect(gz.get())) throw DataError(archive.string() + " is not gzip-compressed");
    if (got == 0) break;
    if (got != 512) throw DataError("truncated archive " + archive.string());
    if (header[0] == '\0') break;  // end-of-archive marker
    if (!tar_checksum_ok(header)) throw DataError("corrupt tar header in " + archive.string());
    std::string name(header.data(), strnlen(header.data(), 100));
    const std::string prefix(header.data() + 345, strnlen(header.data() + 345, 155));
    if (!prefix.empty()) name = prefix + "/" + name;
    const std::string size_field(header.data() + 124, strnlen(header.data() + 124, 12));
    const std::uint64_t size = std::strtoull(size_field.c_str(), nullptr, 8);
    const char type = header[156];
    const std::uint64_t padded = (size + 511) / 512 * 512;

    const std::filesystem::path rel(name);
    bool safe = !rel.is_absolute();
    for (const auto& part : rel)
      if (part == "..") safe = false;
    if (!safe) throw DataError("archive entry escapes destination: " + name);

    if (type == '0' || type == '\0') {
      body.resize(padded);
      if (padded > 0 && read_block(body.data(), static_cast<unsigned>(padded)) != padded)
        throw DataError("truncated archive " + archive.string());
      const auto out_path = destination / rel;
      std::filesystem::create_directories(out_path.parent_path());
      std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
      out.write(body.data(), static_cast<std::streamsize>(size));
      if (!out) throw DataError("cannot write " + out_path.string());
      written.push_back(out_path);
    } else {
      if (type == '5') std::filesystem::create_directories(destination / rel);
      body.resize(padded);
      if (padded > 0 && read_block(body.data(), static_cast<unsigned>(padded)) != padded)
        throw DataError("truncated archive " + archive.string());
    }
  }
  return written;
}

namespace {

std::size_t write_to_file(char* ptr, std::size_t size, std::size_t nmemb, void* userdata) {
  return std::fwrite(ptr, size, nmemb, static_cast<std::FILE*>(userdata)) * size;
}

void download(const std::string& url, const std::filesystem::path& target) {
  std::unique_ptr<std::FILE, decltype(&std::fclose)> file(std::fopen(target.c_str(), "wb"), &std::fclose);
  if (!file) throw DataError("cannot write " + target.string());
  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), &curl_easy_cleanup);
  if (!curl) throw DataError("libcurl initialization failed");
  char error[CURL_ERROR_SIZE] = {0};
  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_CONNECTTIMEOUT, 30L);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, write_to_file);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, file.get());
  curl_easy_setopt(curl.get(), CURLOPT_ERRORBUFFER, error);
  const CURLcode rc = curl_easy_perform(curl.get());
  if (rc != CURLE_OK)
    throw DataError("download of " + url + " failed: " + (error[0] ? std::string(error) : curl_easy_strerror(rc)));
}

std::vector<std::filesystem::path> expected_files(const std::filesystem::path& root) {
  auto files = split_files(root, Split::Train);
  files.push_back(split_files(root, Split::Test).front());
  return files;
}

}  // namespace

bool verify_manifest(const std::filesystem::path& batch_dir) {
  const auto manifest = batch_dir / kCifarManifest;
  if (!std::filesystem::exists(manifest)) return false;
  std::ifstream in(manifest);
  std::string md5, name;
  int entries = 0;
  while (in >> md5 >> name) {
    const auto f = batch_dir / name;
    if (!std::filesystem::exists(f) || md5_file(f) != md5) return false;
    ++entries;
  }
  return entries > 0;
}

FetchResult fetch_cifar10(const FetchOptions& options) {
  FetchResult result;
  const auto batch_dir = options.root / kCifarBatchDir;
  if (verify_manifest(batch_dir)) {
    bool complete = true;
    for (const auto& f : expected_files(options.root)) complete = complete && std::filesystem::exists(f);
    if (complete) {
      result.already_present = true;
      result.files = expected_files(options.root);
      return result;
    }
  }

  std::filesystem::create_directories(options.root);
  const auto archive = options.root / "cifar-10-binary.tar.gz";
  const auto partial = options.root / "cifar-10-binary.tar.gz.part";
  if (!std::filesystem::exists(archive) || md5_file(archive) != options.archive_md5) {
    download(options.url, partial);
    const std::string got = md5_file(partial);
    if (got != options.archive_md5) {
      std::filesystem::remove(partial);
      throw DataError("checksum mismatch for downloaded archive: got " + got + ", expected " + options.archive_md5);
    }
    std::filesystem::rename(partial, archive);
  }

  extract_tar_gz(archive, options.root);
  for (const auto& f : expected_files(options.root))
    if (!std::filesystem::exists(f)) throw DataError("archive did not contain " + f.string());

  std::ofstream manifest(batch_dir / kCifarManifest, std::ios::trunc);
  for (const auto& f : expected_files(options.root)) manifest << md5_file(f) << "  " << f.filename().string() << "\n";
  if (!options.keep_archive) std::filesystem::remove(archive);
  result.files = expected_files(options.root);
  return result;
}

}  // namespace colorlab
