#include "colorlab/cifar.hpp"
#include "colorlab/fetch.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace colorlab;
namespace fs = std::filesystem;

namespace {

void write_bytes(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// A CIFAR-like archive with `per_file` records per batch file.
std::string make_archive(const fs::path& dir, Index per_file) {
  const auto tree = dir / "tree";
  testing::write_fixture_dataset(tree, per_file, 7);
  std::vector<std::pair<std::string, std::string>> entries;
  for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                           "data_batch_5.bin", "test_batch.bin"})
    entries.emplace_back(std::string(kCifarBatchDir) + "/" + name, testing::read_file(tree / kCifarBatchDir / name));
  entries.emplace_back(std::string(kCifarBatchDir) + "/batches.meta.txt", "airplane\nautomobile\n");
  testing::write_tar_gz(dir / "cifar.tar.gz", entries);
  return md5_file(dir / "cifar.tar.gz");
}

}  // namespace

TEST_CASE("records decode channel-major with the label first") {
  const auto dir = testing::scratch_dir("cifar_decode");
  std::string record(kCifarRecordBytes, '\0');
  record[0] = 3;
  record[1 + 0 * 1024 + 0] = char(255);         // R at (0,0)
  record[1 + 1 * 1024 + 1 * 32 + 2] = char(51);  // G at (1,2)
  record[1 + 2 * 1024 + 31 * 32 + 31] = char(102);  // B at (31,31)
  write_bytes(dir / "one.bin", record);
  Cifar10Reader reader({dir / "one.bin"});
  Sample s;
  REQUIRE(reader.next(s));
  CHECK(s.label == 3);
  CHECK(s.index == 0);
  const auto img = s.image();
  CHECK(img.channels[0](0, 0) == 1.0f);
  CHECK(img.channels[1](1, 2) == doctest::Approx(0.2f));
  CHECK(img.channels[2](31, 31) == doctest::Approx(0.4f));
  CHECK(img.channels[1](0, 0) == 0.0f);
  CHECK_FALSE(reader.next(s));
}

TEST_CASE("fixture dataset loads in file order with per-class caps") {
  const auto dir = testing::scratch_dir("cifar_fixture");
  testing::write_fixture_dataset(dir, 20);
  CHECK(dataset_available(dir));
  CHECK(dataset_available(dir / kCifarBatchDir));

  const auto train = load_cifar10({dir, Split::Train});
  REQUIRE(train.size() == 100);
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(train[i].index == Index(i));
    CHECK(train[i].label == int(i % 10));
  }
  const auto original = testing::synthetic_image(1 * 100003 + 0);
  const auto decoded = train[0].image();
  for (int c = 0; c < 3; ++c) CHECK((decoded.channels[c] - original.channels[c]).abs().maxCoeff() <= 0.5f / 255 + 1e-6f);

  const auto test = load_cifar10({dir, Split::Test});
  CHECK(test.size() == 20);
  const auto capped = load_cifar10({dir, Split::Train, 3});
  REQUIRE(capped.size() == 30);
  std::array<int, 10> counts{};
  for (const auto& s : capped) ++counts[s.label];
  for (int c : counts) CHECK(c == 3);
  CHECK(capped.back().index == 29);  // first three of each class come first
}

TEST_CASE("malformed files raise DataError") {
  const auto dir = testing::scratch_dir("cifar_bad");
  testing::write_fixture_dataset(dir, 4);
  const auto batch = dir / kCifarBatchDir;

  std::string bytes = testing::read_file(batch / "test_batch.bin");
  write_bytes(batch / "test_batch.bin", bytes.substr(0, bytes.size() - 10));
  CHECK_THROWS_WITH_AS(load_cifar10({dir, Split::Test}), doctest::Contains("truncated"), DataError);

  bytes[kCifarRecordBytes] = 12;
  write_bytes(batch / "test_batch.bin", bytes);
  CHECK_THROWS_WITH_AS(load_cifar10({dir, Split::Test}), doctest::Contains("label 12"), DataError);

  fs::remove(batch / "data_batch_3.bin");
  CHECK_FALSE(dataset_available(dir));
  CHECK_THROWS_AS(load_cifar10({dir, Split::Train}), DataError);
  CHECK_THROWS_AS(parse_split("validation"), std::invalid_argument);
}

TEST_CASE("manifest checksums are enforced") {
  const auto dir = testing::scratch_dir("cifar_manifest");
  testing::write_fixture_dataset(dir, 4);
  const auto batch = dir / kCifarBatchDir;
  {
    std::ofstream m(batch / kCifarManifest);
    for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                             "data_batch_5.bin", "test_batch.bin"})
      m << md5_file(batch / name) << "  " << name << "\n";
  }
  CHECK(verify_manifest(batch));
  CHECK(load_cifar10({dir, Split::Test}).size() == 4);
  std::string bytes = testing::read_file(batch / "test_batch.bin");
  bytes[100] ^= 1;
  write_bytes(batch / "test_batch.bin", bytes);
  CHECK_FALSE(verify_manifest(batch));
  CHECK_THROWS_WITH_AS(load_cifar10({dir, Split::Test}), doctest::Contains("checksum"), DataError);
  CHECK(load_cifar10({dir, Split::Test, 0, false}).size() == 4);
}

TEST_CASE("md5 and tar.gz extraction") {
  const auto dir = testing::scratch_dir("cifar_tar");
  write_bytes(dir / "abc.txt", "abc");
  CHECK(md5_file(dir / "abc.txt") == "900150983cd24fb0d6963f7d28e17f72");

  const std::string big(1500, 'x');
  testing::write_tar_gz(dir / "a.tar.gz", {{"top.txt", "hello"}, {"sub/dir/big.bin", big}});
  const auto written = extract_tar_gz(dir / "a.tar.gz", dir / "out");
  CHECK(written.size() == 2);
  CHECK(testing::read_file(dir / "out" / "top.txt") == "hello");
  CHECK(testing::read_file(dir / "out" / "sub/dir/big.bin") == big);

  testing::write_tar_gz(dir / "evil.tar.gz", {{"../escape.txt", "no"}});
  CHECK_THROWS_AS(extract_tar_gz(dir / "evil.tar.gz", dir / "out2"), DataError);
  CHECK_FALSE(fs::exists(dir / "escape.txt"));

  write_bytes(dir / "junk.tar.gz", "this is not gzip data at all, sorry");
  CHECK_THROWS_AS(extract_tar_gz(dir / "junk.tar.gz", dir / "out3"), DataError);
}

TEST_CASE("fetch downloads, verifies, unpacks and is idempotent") {
  const auto dir = testing::scratch_dir("cifar_fetch");
  const std::string md5 = make_archive(dir, 3);
  FetchOptions opts;
  opts.root = dir / "data";
  opts.url = "file://" + (dir / "cifar.tar.gz").string();
  opts.archive_md5 = md5;

  const auto first = fetch_cifar10(opts);
  CHECK_FALSE(first.already_present);
  CHECK(first.files.size() == 6);
  CHECK(verify_manifest(opts.root / kCifarBatchDir));
  CHECK_FALSE(fs::exists(opts.root / "cifar-10-binary.tar.gz"));
  CHECK(load_cifar10({opts.root, Split::Train}).size() == 15);

  const auto stamp = fs::last_write_time(opts.root / kCifarBatchDir / "test_batch.bin");
  const auto second = fetch_cifar10(opts);
  CHECK(second.already_present);
  CHECK(fs::last_write_time(opts.root / kCifarBatchDir / "test_batch.bin") == stamp);

  FetchOptions wrong = opts;
  wrong.root = dir / "data2";
  wrong.archive_md5 = std::string(32, '0');
  CHECK_THROWS_WITH_AS(fetch_cifar10(wrong), doctest::Contains("checksum"), DataError);
  CHECK_FALSE(dataset_available(wrong.root));

  FetchOptions missing = opts;
  missing.root = dir / "data3";
  missing.url = "file://" + (dir / "nope.tar.gz").string();
  CHECK_THROWS_AS(fetch_cifar10(missing), DataError);
}

TEST_CASE("explicit data root beats the environment") {
  ::setenv("COLORLAB_DATA_DIR", "/from/env", 1);
  CHECK(resolve_data_root(std::nullopt) == fs::path("/from/env"));
  CHECK(resolve_data_root(fs::path("/explicit")) == fs::path("/explicit"));
  ::unsetenv("COLORLAB_DATA_DIR");
  CHECK(resolve_data_root(std::nullopt, "fallback") == fs::path("fallback"));
}
