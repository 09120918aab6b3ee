#include "colorlab/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace colorlab {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'O', 'L', 'O', 'R', 'L', 'A', 'B'};

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw CheckpointError("checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::json header = meta;
  header["format_version"] = kFormatVersion;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, m] : tensors) index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["tensors"] = index;
  const std::string header_text = header.dump();

  std::string buf(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, kFormatVersion);
  put<std::uint64_t>(buf, header_text.size());
  buf += header_text;
  for (const auto& [name, m] : tensors)
    buf.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
  put<std::uint32_t>(buf, crc32_of(buf.data(), buf.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 16 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(path.string() + " is not a colorlab checkpoint");
  std::size_t crc_pos = buf.size() - sizeof(std::uint32_t);
  const auto stored_crc = get<std::uint32_t>(buf, crc_pos);
  if (stored_crc != crc32_of(buf.data(), buf.size() - sizeof(std::uint32_t)))
    throw CheckpointError(path.string() + ": integrity check failed (CRC mismatch)");

  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(buf, pos);
  if (version != kFormatVersion)
    throw CheckpointError(path.string() + ": unsupported format version " + std::to_string(version));
  const auto header_size = get<std::uint64_t>(buf, pos);
  if (pos + header_size > buf.size()) throw CheckpointError("checkpoint header truncated");
  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(buf.substr(pos, header_size));
  pos += header_size;
  for (const auto& t : ckpt.meta.at("tensors")) {
    const auto rows = t.at("rows").get<Index>(), cols = t.at("cols").get<Index>();
    RowMatrix<float> m(rows, cols);
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(float);
    if (rows < 0 || cols < 0 || pos + bytes > buf.size() - sizeof(std::uint32_t))
      throw CheckpointError("checkpoint payload truncated");
    std::memcpy(m.data(), buf.data() + pos, bytes);
    pos += bytes;
    ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  ckpt.meta.erase("tensors");
  ckpt.meta.erase("format_version");
  return ckpt;
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.first == name) return true;
  return false;
}

const RowMatrix<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.first == name) return t.second;
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

template <typename Scalar>
void store(Checkpoint& ckpt, const std::vector<nn::Param<Scalar>*>& params,
           const std::vector<nn::Buffer<Scalar>>& buffers, const std::string& prefix) {
  for (const auto* p : params) ckpt.tensors.emplace_back(prefix + p->name, p->value.template cast<float>());
  for (const auto& b : buffers) ckpt.tensors.emplace_back(prefix + b.name, b.value->template cast<float>());
}

template <typename Scalar>
void restore(const Checkpoint& ckpt, const std::vector<nn::Param<Scalar>*>& params,
             const std::vector<nn::Buffer<Scalar>>& buffers, const std::string& prefix) {
  auto copy = [&](const std::string& name, RowMatrix<Scalar>& dst) {
    const RowMatrix<float>& src = ckpt.tensor(prefix + name);
    if (src.rows() != dst.rows() || src.cols() != dst.cols())
      throw CheckpointError("tensor '" + prefix + name + "' has shape " + std::to_string(src.rows()) + "x" +
                            std::to_string(src.cols()) + ", expected " + std::to_string(dst.rows()) + "x" +
                            std::to_string(dst.cols()));
    dst = src.template cast<Scalar>();
  };
  for (auto* p : params) copy(p->name, p->value);
  for (const auto& b : buffers) copy(b.name, *b.value);
}

template void store<float>(Checkpoint&, const std::vector<nn::Param<float>*>&, const std::vector<nn::Buffer<float>>&,
                           const std::string&);
template void store<double>(Checkpoint&, const std::vector<nn::Param<double>*>&,
                            const std::vector<nn::Buffer<double>>&, const std::string&);
template void restore<float>(const Checkpoint&, const std::vector<nn::Param<float>*>&,
                             const std::vector<nn::Buffer<float>>&, const std::string&);
template void restore<double>(const Checkpoint&, const std::vector<nn::Param<double>*>&,
                              const std::vector<nn::Buffer<double>>&, const std::string&);

void check_grid(const Checkpoint& ckpt, const AbBinGrid& grid) {
  const std::string expected = grid.version();
  const std::string stored = ckpt.meta.value("grid_version", "");
  if (stored != expected)
    throw CheckpointError("checkpoint was trained against bin grid '" + stored + "', this build uses '" + expected + "'");
}

Checkpoint make_classifier_checkpoint(ClassifierNet<float>& net, const AbBinGrid& grid) {
  Checkpoint ckpt;
  ckpt.meta["model"] = "classifier";
  ckpt.meta["classifier"] = net.config().to_json();
  ckpt.meta["grid_version"] = grid.version();
  store(ckpt, net.parameters(), net.buffers(), "");
  return ckpt;
}

Checkpoint make_gan_checkpoint(Generator<float>& gen, Discriminator<float>& disc) {
  Checkpoint ckpt;
  ckpt.meta["model"] = "gan";
  ckpt.meta["generator"] = gen.config().to_json();
  ckpt.meta["discriminator"] = disc.config().to_json();
  store(ckpt, gen.parameters(), gen.buffers(), "G.");
  store(ckpt, disc.parameters(), disc.buffers(), "D.");
  return ckpt;
}

Checkpoint export_generator(const Checkpoint& gan) {
  if (gan.model() != "gan") throw CheckpointError("export_generator: not a GAN checkpoint");
  Checkpoint out;
  out.meta["model"] = "gan-generator";
  out.meta["generator"] = gan.meta.at("generator");
  Generator<float> gen(GeneratorConfig::from_json(gan.meta.at("generator")));
  for (const auto* p : gen.parameters()) out.tensors.emplace_back("G." + p->name, gan.tensor("G." + p->name));
  for (const auto& b : gen.buffers()) out.tensors.emplace_back("G." + b.name, gan.tensor("G." + b.name));
  return out;
}

std::unique_ptr<ClassifierNet<float>> load_classifier(const Checkpoint& ckpt) {
  if (ckpt.model() != "classifier") throw CheckpointError("not a classifier checkpoint (model '" + ckpt.model() + "')");
  auto net = std::make_unique<ClassifierNet<float>>(ClassifierConfig::from_json(ckpt.meta.at("classifier")));
  restore(ckpt, net->parameters(), net->buffers(), "");
  return net;
}

std::unique_ptr<Generator<float>> load_generator(const Checkpoint& ckpt) {
  if (ckpt.model() != "gan" && ckpt.model() != "gan-generator")
    throw CheckpointError("not a GAN checkpoint (model '" + ckpt.model() + "')");
  auto net = std::make_unique<Generator<float>>(GeneratorConfig::from_json(ckpt.meta.at("generator")));
  restore(ckpt, net->parameters(), net->buffers(), "G.");
  return net;
}

std::unique_ptr<Discriminator<float>> load_discriminator(const Checkpoint& ckpt) {
  if (ckpt.model() != "gan") throw CheckpointError("checkpoint has no discriminator");
  auto net = std::make_unique<Discriminator<float>>(DiscriminatorConfig::from_json(ckpt.meta.at("discriminator")));
  restore(ckpt, net->parameters(), net->buffers(), "D.");
  return net;
}

}  // namespace colorlab
