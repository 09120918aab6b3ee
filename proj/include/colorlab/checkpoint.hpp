#pragma once

#include "colorlab/classifier.hpp"
#include "colorlab/gan.hpp"
#include "colorlab/nn/adam.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace colorlab {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// On-disk layout (little endian):
///   "COLORLAB" | u32 format version | u64 header size | JSON header |
///   float32 payload of every tensor listed in header["tensors"] | u32 CRC-32
/// The CRC covers every byte before it.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, RowMatrix<float>>> tensors;

  std::string model() const { return meta.value("model", ""); }

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool has(const std::string& name) const;
  const RowMatrix<float>& tensor(const std::string& name) const;
};

template <typename Scalar>
void store(Checkpoint& ckpt, const std::vector<nn::Param<Scalar>*>& params,
           const std::vector<nn::Buffer<Scalar>>& buffers, const std::string& prefix);

/// Copies tensors back; throws CheckpointError on a missing name or shape mismatch.
template <typename Scalar>
void restore(const Checkpoint& ckpt, const std::vector<nn::Param<Scalar>*>& params,
             const std::vector<nn::Buffer<Scalar>>& buffers, const std::string& prefix);

/// Verifies that the checkpoint was produced against `grid`.
void check_grid(const Checkpoint& ckpt, const AbBinGrid& grid);

// Model-level helpers.  Model kinds: "classifier", "gan", "gan-generator".

Checkpoint make_classifier_checkpoint(ClassifierNet<float>& net, const AbBinGrid& grid);
Checkpoint make_gan_checkpoint(Generator<float>& gen, Discriminator<float>& disc);
/// Strips the discriminator (and any optimizer state) for inference.
Checkpoint export_generator(const Checkpoint& gan);

std::unique_ptr<ClassifierNet<float>> load_classifier(const Checkpoint& ckpt);
std::unique_ptr<Generator<float>> load_generator(const Checkpoint& ckpt);
std::unique_ptr<Discriminator<float>> load_discriminator(const Checkpoint& ckpt);

}  // namespace colorlab
