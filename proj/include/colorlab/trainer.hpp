#pragma once

#include "colorlab/checkpoint.hpp"
#include "colorlab/classifier.hpp"
#include "colorlab/gan.hpp"
#include "colorlab/metrics.hpp"
#include "colorlab/nn/adam.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace colorlab {

enum class ModelKind { Classifier, Gan };
std::string to_string(ModelKind m);
ModelKind parse_model(const std::string& s);  // "classifier" | "gan"

/// Raised when a loss turns non-finite; a diagnostic checkpoint has been written.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  ModelKind model = ModelKind::Classifier;
  OutputVariant variant = OutputVariant::DownsampleTarget;
  double lr_classifier = 1e-3;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double beta1_classifier = 0.9;
  double beta1_gan = 0.5;
  double beta2 = 0.999;
  double lambda = 100;
  int epochs = 100;
  Index batch_size = 128;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;  // epochs; 0 = only final/best
  Index subset = 0;           // per-class cap; 0 = full split
  int soft_k = 5;
  double soft_sigma = 5;
  double temperature = 0.38;
  int eval_every = 1;         // epochs; 0 = never
  Index eval_images = 1000;   // test images scored during training; 0 = all
  std::string data_dir;       // empty = COLORLAB_DATA_DIR or data/cifar10
  std::string out_dir = "runs/default";

  /// Defaults for a model (epochs: 100 classifier, 200 GAN).
  static TrainConfig defaults(ModelKind model);

  /// Applies one "key = value" setting; throws std::invalid_argument on an
  /// unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  /// Reads a flat key-value file ('#' comments, blank lines ignored).
  void load_file(const std::filesystem::path& path);
  std::string to_text() const;
  void validate() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Append-only (step, name, value) records.  The first line of the file is a
/// header with the run id and config snapshot; every further line is one record.
class RunLog {
 public:
  struct Record {
    long long step;
    std::string name;
    double value;
  };

  RunLog(std::string run_id, nlohmann::json config);
  /// Persists to `path` as line-delimited JSON.  With `append`, records of an
  /// existing file are carried over up to step `keep_until` (all if negative).
  RunLog(std::string run_id, nlohmann::json config, const std::filesystem::path& path, bool append = false,
         long long keep_until = -1);

  /// Throws std::invalid_argument if `step` is smaller than the last step
  /// recorded under `name`.
  void log(long long step, const std::string& name, double value);

  const std::vector<Record>& records() const { return records_; }
  std::vector<Record> series(const std::string& name) const;
  const std::string& run_id() const { return run_id_; }

  /// Parses a file written by RunLog.
  static RunLog read(const std::filesystem::path& path);

 private:
  std::string run_id_;
  nlohmann::json config_;
  std::vector<Record> records_;
  std::map<std::string, long long> last_step_;
  std::ofstream file_;
};

/// Lab view of a dataset: raw L (1 × N·H·W) and raw ab (2 × N·H·W), pixel
/// order (n, y, x).
struct LabDataset {
  RowMatrix<float> L;
  RowMatrix<float> ab;
  Index count = 0;
  Index height = 0;
  Index width = 0;

  Index pixels_per_image() const { return height * width; }
};

LabDataset to_lab_dataset(const std::vector<RgbImage<float>>& images);

struct ClassifierPair {
  Tensor<float> input;              // normalized L
  ColorDistribution<float> target;  // soft-encoded (pooled first for the downsample variant)
};

/// One training pair from one image.
ClassifierPair make_training_pair_classifier(const RgbImage<float>& img, const ClassifierConfig& net,
                                             std::shared_ptr<const AbBinGrid> grid, int k, float sigma);
/// The same for a batch of dataset indices.
ClassifierPair make_classifier_batch(const LabDataset& data, const std::vector<Index>& indices,
                                     const ClassifierConfig& net, std::shared_ptr<const AbBinGrid> grid, int k,
                                     float sigma);

struct GanPair {
  Tensor<float> lightness;  // normalized L
  Tensor<float> ab;         // ab / 110
};
GanPair make_gan_batch(const LabDataset& data, const std::vector<Index>& indices);

/// Seeded permutation of [0, n) for an epoch: equal (seed, epoch) → equal order.
std::vector<Index> epoch_permutation(Index n, std::uint64_t seed, int epoch);

/// Optimizer + network for the classification model.
class ClassifierTrainer {
 public:
  ClassifierTrainer(const TrainConfig& config, std::shared_ptr<const AbBinGrid> grid);

  /// One Adam step on the pair; returns the loss before the update.
  float step(const ClassifierPair& batch);
  /// Loss without updating (training-mode forward, so BN uses batch statistics).
  float loss(const ClassifierPair& batch);

  ClassifierNet<float>& net() { return net_; }
  nn::Adam<float>& optimizer() { return adam_; }
  std::shared_ptr<const AbBinGrid> grid() const { return grid_; }

  Checkpoint checkpoint();                 // weights + optimizer state
  void restore(const Checkpoint& ckpt);    // inverse of checkpoint()

 private:
  std::shared_ptr<const AbBinGrid> grid_;
  ClassifierNet<float> net_;
  nn::Adam<float> adam_;
};

/// Generator + discriminator with their optimizers.  Each step performs one
/// discriminator update followed by one generator update on the same batch.
class GanTrainer {
 public:
  explicit GanTrainer(const TrainConfig& config, GeneratorConfig g = {}, DiscriminatorConfig d = {});

  GanLossTerms<float> step(const GanPair& batch);
  /// Generator L1 (normalized units) in eval mode, no update.
  float l1(const GanPair& batch);

  /// Scales the adversarial term of the generator objective (1 = standard, 0 = pure L1).
  void set_adversarial_weight(float w) { adv_weight_ = w; }
  /// Discriminator loss of the most recent step (before its update).
  float last_d_loss() const { return last_d_loss_; }

  Generator<float>& generator() { return gen_; }
  Discriminator<float>& discriminator() { return disc_; }
  nn::Adam<float>& optimizer_g() { return adam_g_; }
  nn::Adam<float>& optimizer_d() { return adam_d_; }

  Checkpoint checkpoint();
  void restore(const Checkpoint& ckpt);

 private:
  float lambda_;
  float adv_weight_ = 1;
  float last_d_loss_ = 0;
  Generator<float> gen_;
  Discriminator<float> disc_;
  nn::Adam<float> adam_g_, adam_d_;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;  // empty when no evaluation ran
  double best_psnr = 0;
  int epochs_run = 0;
  long long steps = 0;
  double last_epoch_loss = 0;
};

struct TrainOptions {
  /// Checkpoint to continue from (weights, optimizer state, epoch counter).
  std::optional<std::filesystem::path> resume;
  /// Progress lines (one per epoch / evaluation).
  std::function<void(const std::string&)> progress;
};

/// Runs the configured epochs on `train`, scoring `eval` (may be empty) every
/// eval_every epochs.  Writes run.jsonl, config.txt, final.ckpt, best.ckpt and
/// epoch_<n>.ckpt under config.out_dir.  Throws TrainingDiverged after writing
/// diverged.ckpt when a loss becomes non-finite.
TrainResult train(const TrainConfig& config, const std::vector<RgbImage<float>>& train_images,
                  const std::vector<RgbImage<float>>& eval_images, const TrainOptions& options = {});

}  // namespace colorlab
