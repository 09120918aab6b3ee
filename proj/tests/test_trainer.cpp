#include "colorlab/trainer.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

using namespace colorlab;
namespace fs = std::filesystem;

namespace {

std::vector<RgbImage<float>> synthetic_set(Index count, std::uint64_t seed) {
  std::vector<RgbImage<float>> out;
  for (Index i = 0; i < count; ++i) out.push_back(testing::synthetic_image(seed + i));
  return out;
}

TrainConfig small_config(ModelKind model, const fs::path& out) {
  TrainConfig c = TrainConfig::defaults(model);
  c.epochs = 1;
  c.batch_size = 25;
  c.eval_images = 10;
  c.checkpoint_every = 1;
  c.seed = 5;
  c.out_dir = out.string();
  return c;
}

bool same_tensors(const Checkpoint& a, const Checkpoint& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    if (a.tensors[i].first != b.tensors[i].first || a.tensors[i].second != b.tensors[i].second) return false;
  return true;
}

}  // namespace

TEST_CASE("configuration defaults, parsing and validation") {
  const auto cls = TrainConfig::defaults(ModelKind::Classifier);
  CHECK(cls.lr_classifier == 1e-3);
  CHECK(cls.beta1_classifier == 0.9);
  CHECK(cls.beta2 == 0.999);
  CHECK(cls.epochs == 100);
  CHECK(cls.batch_size == 128);
  const auto gan = TrainConfig::defaults(ModelKind::Gan);
  CHECK(gan.lr_g == 1e-4);
  CHECK(gan.lr_d == 1e-4);
  CHECK(gan.beta1_gan == 0.5);
  CHECK(gan.lambda == 100);
  CHECK(gan.epochs == 200);

  const auto dir = testing::scratch_dir("trainer_config");
  {
    std::ofstream f(dir / "run.cfg");
    f << "# overrides\n\nmodel = gan\nepochs=3\n  lambda = 10   # weaker L1\nvariant = deconv\n";
  }
  TrainConfig c;
  c.load_file(dir / "run.cfg");
  CHECK(c.model == ModelKind::Gan);
  CHECK(c.epochs == 3);
  CHECK(c.lambda == 10);
  CHECK(c.variant == OutputVariant::UpsampleDeconv);

  TrainConfig again;
  {
    std::ofstream f(dir / "copy.cfg");
    f << c.to_text();
  }
  again.load_file(dir / "copy.cfg");
  CHECK(again.to_json() == c.to_json());
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());

  CHECK_THROWS_WITH_AS(c.set("learning_rate", "1"), doctest::Contains("unknown key"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("epochs", "ten"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("epochs", "3.5"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("model", "vae"), std::invalid_argument);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  {
    std::ofstream f(dir / "broken.cfg");
    f << "epochs 3\n";
  }
  CHECK_THROWS_AS(TrainConfig().load_file(dir / "broken.cfg"), std::invalid_argument);
}

TEST_CASE("run log keeps steps monotone and reads back") {
  const auto dir = testing::scratch_dir("trainer_log");
  {
    RunLog log("run-1", {{"epochs", 2}}, dir / "run.jsonl");
    log.log(1, "train/loss", 5.0);
    log.log(2, "train/loss", 4.0);
    log.log(2, "eval/psnr", std::numeric_limits<double>::infinity());
    log.log(3, "train/loss", std::nan(""));
    CHECK_THROWS_AS(log.log(1, "train/loss", 1.0), std::invalid_argument);
    log.log(1, "other", 1.0);  // independent series
    CHECK(log.series("train/loss").size() == 3);
  }
  const RunLog back = RunLog::read(dir / "run.jsonl");
  CHECK(back.run_id() == "run-1");
  REQUIRE(back.records().size() == 5);
  CHECK(back.series("train/loss")[1].value == 4.0);
  CHECK(std::isinf(back.series("eval/psnr")[0].value));
  CHECK(std::isnan(back.series("train/loss")[2].value));

  // Appending keeps records up to the given step only.
  { RunLog resumed("run-1", {}, dir / "run.jsonl", true, 2); }
  CHECK(RunLog::read(dir / "run.jsonl").series("train/loss").size() == 2);
}

TEST_CASE("epoch permutations are seeded") {
  const auto a = epoch_permutation(1000, 3, 0);
  CHECK(a == epoch_permutation(1000, 3, 0));
  CHECK(a != epoch_permutation(1000, 3, 1));
  CHECK(a != epoch_permutation(1000, 4, 0));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (Index i = 0; i < 1000; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("training pairs") {
  const auto grid = standard_bin_grid();
  RgbImage<float> gray(32, 32);
  for (auto& c : gray.channels) c.setConstant(0.5f);
  const auto cfg = ClassifierConfig::standard(OutputVariant::DownsampleTarget);
  const auto pair = make_training_pair_classifier(gray, cfg, grid, 5, 5.0f);
  CHECK(pair.input.height == 32);
  CHECK(pair.input.data.cwiseAbs().maxCoeff() < 0.1f);  // L ≈ 53.4 → ≈ 0.07
  CHECK(pair.target.height == 8);
  CHECK(pair.target.width == 8);
  const Index origin = grid->nearest(0, 0);
  for (Index p = 0; p < pair.target.pixels(); ++p) {
    Index top;
    pair.target.probs.col(p).maxCoeff(&top);
    CHECK(top == origin);
    CHECK(std::abs(pair.target.probs.col(p).sum() - 1.0f) < 1e-5f);
  }

  const auto colorful = testing::synthetic_image(3);
  const auto full = make_training_pair_classifier(colorful, ClassifierConfig::standard(OutputVariant::UpsampleBilinear),
                                                  grid, 5, 5.0f);
  CHECK(full.target.height == 32);
  CHECK(full.target.probs.minCoeff() >= 0.0f);
  CHECK((full.target.probs.array() > 0).colwise().count().maxCoeff() <= 5);

  const auto data = to_lab_dataset({colorful, gray});
  const auto gan = make_gan_batch(data, {1, 0});
  CHECK(gan.lightness.batch == 2);
  CHECK(gan.ab.channels() == 2);
  CHECK(gan.ab.data.cwiseAbs().maxCoeff() <= 1.0f);
  CHECK(gan.ab.data.middleCols(0, 1024).cwiseAbs().maxCoeff() < 0.01f);  // the gray image comes first
}

TEST_CASE("one classifier epoch: logs, checkpoints, bit-exact reload") {
  const auto dir = testing::scratch_dir("trainer_epoch");
  const auto train_set = synthetic_set(100, 1000);
  const auto eval_set = synthetic_set(10, 5000);
  TrainConfig cfg = small_config(ModelKind::Classifier, dir / "run");
  std::vector<std::string> lines;
  const TrainResult r = train(cfg, train_set, eval_set, {.progress = [&](const std::string& s) { lines.push_back(s); }});
  CHECK(r.epochs_run == 1);
  CHECK(r.steps == 4);
  CHECK(std::isfinite(r.last_epoch_loss));
  CHECK(fs::exists(r.final_checkpoint));
  CHECK(fs::exists(r.best_checkpoint));
  CHECK(fs::exists(dir / "run" / "config.txt"));
  CHECK(lines.size() == 1);

  const RunLog log = RunLog::read(dir / "run" / "run.jsonl");
  CHECK(log.series("train/loss").size() == 4);
  CHECK(log.series("eval/psnr").size() == 1);
  CHECK(log.series("eval/pixel_acc@0.02").size() == 1);

  const Checkpoint ckpt = Checkpoint::load(r.final_checkpoint);
  CHECK(ckpt.meta.at("epoch") == 1);
  CHECK(ckpt.meta.at("step") == 4);
  ClassifierTrainer fresh(cfg, standard_bin_grid());
  fresh.restore(ckpt);
  CHECK(same_tensors(fresh.checkpoint(), ckpt));
  auto loaded = load_classifier(ckpt);
  std::vector<Plane<float>> L{rgb_to_lab(eval_set[0]).L};
  CHECK(classifier_forward(lightness_tensor(L), *loaded).data ==
        classifier_forward(lightness_tensor(L), fresh.net()).data);
}

TEST_CASE("resuming reproduces an uninterrupted run") {
  const auto dir = testing::scratch_dir("trainer_resume");
  const auto train_set = synthetic_set(50, 2000);
  for (ModelKind model : {ModelKind::Classifier, ModelKind::Gan}) {
    TrainConfig straight = small_config(model, dir / ("straight_" + to_string(model)));
    straight.epochs = 2;
    straight.eval_every = 0;
    const auto full = train(straight, train_set, {});

    TrainConfig first = straight;
    first.out_dir = (dir / ("split_" + to_string(model))).string();
    first.epochs = 1;
    train(first, train_set, {});
    TrainConfig second = first;
    second.epochs = 2;
    const auto resumed = train(second, train_set, {}, {.resume = fs::path(first.out_dir) / "final.ckpt"});
    CHECK(resumed.steps == full.steps);
    CHECK(resumed.last_epoch_loss == doctest::Approx(full.last_epoch_loss).epsilon(0.05));
    INFO("model " << to_string(model));
    CHECK(same_tensors(Checkpoint::load(resumed.final_checkpoint), Checkpoint::load(full.final_checkpoint)));
    const auto log = RunLog::read(fs::path(first.out_dir) / "run.jsonl");
    CHECK(log.series("epoch").size() == 2);
  }
}

TEST_CASE("a non-finite loss stops training with a diagnostic checkpoint") {
  const auto dir = testing::scratch_dir("trainer_diverge");
  auto train_set = synthetic_set(10, 3000);
  train_set[3].channels[0](5, 5) = std::numeric_limits<float>::quiet_NaN();
  for (ModelKind model : {ModelKind::Classifier, ModelKind::Gan}) {
    TrainConfig cfg = small_config(model, dir / to_string(model));
    cfg.batch_size = 5;
    CHECK_THROWS_AS(train(cfg, train_set, {}), TrainingDiverged);
    CHECK(fs::exists(dir / to_string(model) / "diverged.ckpt"));
    CHECK_FALSE(fs::exists(dir / to_string(model) / "final.ckpt"));
    const auto ckpt = Checkpoint::load(dir / to_string(model) / "diverged.ckpt");
    for (const auto& [name, t] : ckpt.tensors) CHECK(t.allFinite());
  }
}

TEST_CASE("classifier rejects images of the wrong size") {
  const auto dir = testing::scratch_dir("trainer_size");
  std::vector<RgbImage<float>> odd{RgbImage<float>(16, 16)};
  CHECK_THROWS_AS(train(small_config(ModelKind::Classifier, dir), odd, {}), std::invalid_argument);
  CHECK_THROWS_AS(train(small_config(ModelKind::Classifier, dir), {}, {}), std::invalid_argument);
}
