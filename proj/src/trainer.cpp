#include "colorlab/trainer.hpp"

#include "colorlab/colorize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace colorlab {

std::string to_string(ModelKind m) { return m == ModelKind::Classifier ? "classifier" : "gan"; }

ModelKind parse_model(const std::string& s) {
  if (s == "classifier") return ModelKind::Classifier;
  if (s == "gan") return ModelKind::Gan;
  throw std::invalid_argument("unknown model '" + s + "' (classifier|gan)");
}

// ---------------------------------------------------------------------------
// TrainConfig

TrainConfig TrainConfig::defaults(ModelKind model) {
  TrainConfig c;
  c.model = model;
  c.epochs = model == ModelKind::Classifier ? 100 : 200;
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw std::invalid_argument("config: bad value '" + value + "' for " + key);
  return out;
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "model") model = parse_model(value);
  else if (key == "variant") variant = parse_variant(value);
  else if (key == "lr_classifier") lr_classifier = parse_number<double>(key, value);
  else if (key == "lr_g") lr_g = parse_number<double>(key, value);
  else if (key == "lr_d") lr_d = parse_number<double>(key, value);
  else if (key == "beta1_classifier") beta1_classifier = parse_number<double>(key, value);
  else if (key == "beta1_gan") beta1_gan = parse_number<double>(key, value);
  else if (key == "beta2") beta2 = parse_number<double>(key, value);
  else if (key == "lambda") lambda = parse_number<double>(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "batch_size") batch_size = parse_number<Index>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_number<int>(key, value);
  else if (key == "subset") subset = parse_number<Index>(key, value);
  else if (key == "soft_k") soft_k = parse_number<int>(key, value);
  else if (key == "soft_sigma") soft_sigma = parse_number<double>(key, value);
  else if (key == "temperature") temperature = parse_number<double>(key, value);
  else if (key == "eval_every") eval_every = parse_number<int>(key, value);
  else if (key == "eval_images") eval_images = parse_number<Index>(key, value);
  else if (key == "data_dir") data_dir = value;
  else if (key == "out_dir") out_dir = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void TrainConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "model = " << to_string(model) << "\n"
     << "variant = " << to_string(variant) << "\n"
     << "lr_classifier = " << lr_classifier << "\n"
     << "lr_g = " << lr_g << "\n"
     << "lr_d = " << lr_d << "\n"
     << "beta1_classifier = " << beta1_classifier << "\n"
     << "beta1_gan = " << beta1_gan << "\n"
     << "beta2 = " << beta2 << "\n"
     << "lambda = " << lambda << "\n"
     << "epochs = " << epochs << "\n"
     << "batch_size = " << batch_size << "\n"
     << "seed = " << seed << "\n"
     << "checkpoint_every = " << checkpoint_every << "\n"
     << "subset = " << subset << "\n"
     << "soft_k = " << soft_k << "\n"
     << "soft_sigma = " << soft_sigma << "\n"
     << "temperature = " << temperature << "\n"
     << "eval_every = " << eval_every << "\n"
     << "eval_images = " << eval_images << "\n";
  if (!data_dir.empty()) os << "data_dir = " << data_dir << "\n";
  os << "out_dir = " << out_dir << "\n";
  return os.str();
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("config: " + what);
  };
  require(lr_classifier > 0 && lr_g > 0 && lr_d > 0, "learning rates must be > 0");
  require(beta1_classifier >= 0 && beta1_classifier < 1 && beta1_gan >= 0 && beta1_gan < 1 && beta2 >= 0 && beta2 < 1,
          "Adam betas must be in [0,1)");
  require(lambda >= 0, "lambda must be >= 0");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(checkpoint_every >= 0 && eval_every >= 0, "cadences must be >= 0");
  require(subset >= 0 && eval_images >= 0, "counts must be >= 0");
  require(soft_k >= 1, "soft_k must be >= 1");
  require(soft_sigma > 0 && temperature > 0, "soft_sigma and temperature must be > 0");
  require(!out_dir.empty(), "out_dir must be set");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["model"] = to_string(model);
  j["variant"] = to_string(variant);
  j["lr_classifier"] = lr_classifier;
  j["lr_g"] = lr_g;
  j["lr_d"] = lr_d;
  j["beta1_classifier"] = beta1_classifier;
  j["beta1_gan"] = beta1_gan;
  j["beta2"] = beta2;
  j["lambda"] = lambda;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["subset"] = subset;
  j["soft_k"] = soft_k;
  j["soft_sigma"] = soft_sigma;
  j["temperature"] = temperature;
  j["eval_every"] = eval_every;
  j["eval_images"] = eval_images;
  j["data_dir"] = data_dir;
  j["out_dir"] = out_dir;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) c.set(key, value.is_string() ? value.get<std::string>() : value.dump());
  return c;
}

// ---------------------------------------------------------------------------
// RunLog

RunLog::RunLog(std::string run_id, nlohmann::json config) : run_id_(std::move(run_id)), config_(std::move(config)) {}

RunLog::RunLog(std::string run_id, nlohmann::json config, const std::filesystem::path& path, bool append,
               long long keep_until)
    : RunLog(std::move(run_id), std::move(config)) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<Record> previous;
  if (append && std::filesystem::exists(path)) previous = read(path).records_;
  file_.open(path, std::ios::trunc);
  if (!file_) throw std::runtime_error("cannot write run log " + path.string());
  file_ << nlohmann::json{{"run_id", run_id_}, {"config", config_}}.dump() << "\n";
  // Records past the resume point belong to an abandoned continuation.
  for (const auto& r : previous)
    if (keep_until < 0 || r.step <= keep_until) log(r.step, r.name, r.value);
  file_.flush();
}

void RunLog::log(long long step, const std::string& name, double value) {
  const auto it = last_step_.find(name);
  if (it != last_step_.end() && step < it->second)
    throw std::invalid_argument("run log: step " + std::to_string(step) + " for '" + name + "' precedes step " +
                                std::to_string(it->second));
  last_step_[name] = step;
  records_.push_back({step, name, value});
  if (file_.is_open()) {
    nlohmann::json j{{"step", step}, {"name", name}};
    if (std::isfinite(value)) j["value"] = value;
    else j["value"] = std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
    file_ << j.dump() << "\n";
    file_.flush();
  }
}

std::vector<RunLog::Record> RunLog::series(const std::string& name) const {
  std::vector<Record> out;
  for (const auto& r : records_)
    if (r.name == name) out.push_back(r);
  return out;
}

RunLog RunLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read run log " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty run log " + path.string());
  const auto header = nlohmann::json::parse(line);
  RunLog log(header.at("run_id").get<std::string>(), header.at("config"));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    double v;
    if (j.at("value").is_string()) {
      const auto s = j.at("value").get<std::string>();
      v = s == "nan" ? std::nan("") : (s == "inf" ? HUGE_VAL : -HUGE_VAL);
    } else {
      v = j.at("value").get<double>();
    }
    log.log(j.at("step").get<long long>(), j.at("name").get<std::string>(), v);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Data

LabDataset to_lab_dataset(const std::vector<RgbImage<float>>& images) {
  LabDataset d;
  d.count = static_cast<Index>(images.size());
  if (images.empty()) return d;
  d.height = images.front().height();
  d.width = images.front().width();
  const Index hw = d.pixels_per_image();
  d.L.resize(1, d.count * hw);
  d.ab.resize(2, d.count * hw);
  for (Index n = 0; n < d.count; ++n) {
    const auto& img = images[n];
    if (img.height() != d.height || img.width() != d.width)
      throw std::invalid_argument("to_lab_dataset: images differ in size");
    const LabImage<float> lab = rgb_to_lab(img);
    d.L.block(0, n * hw, 1, hw) = Eigen::Map<const RowMatrix<float>>(lab.L.data(), 1, hw);
    d.ab.block(0, n * hw, 2, hw) = ab_to_matrix(lab.ab);
  }
  return d;
}

namespace {

Tensor<float> normalized_lightness(const LabDataset& data, const std::vector<Index>& indices) {
  const Index hw = data.pixels_per_image();
  Tensor<float> t(1, static_cast<Index>(indices.size()), data.height, data.width);
  for (std::size_t i = 0; i < indices.size(); ++i)
    t.data.block(0, static_cast<Index>(i) * hw, 1, hw) =
        (data.L.block(0, indices[i] * hw, 1, hw).array() / 50.0f - 1.0f).matrix();
  return t;
}

RowMatrix<float> gather_ab(const LabDataset& data, const std::vector<Index>& indices) {
  const Index hw = data.pixels_per_image();
  RowMatrix<float> ab(2, static_cast<Index>(indices.size()) * hw);
  for (std::size_t i = 0; i < indices.size(); ++i)
    ab.block(0, static_cast<Index>(i) * hw, 2, hw) = data.ab.block(0, indices[i] * hw, 2, hw);
  return ab;
}

}  // namespace

ClassifierPair make_classifier_batch(const LabDataset& data, const std::vector<Index>& indices,
                                     const ClassifierConfig& net, std::shared_ptr<const AbBinGrid> grid, int k,
                                     float sigma) {
  ClassifierPair pair;
  pair.input = normalized_lightness(data, indices);
  const Index n = static_cast<Index>(indices.size());
  RowMatrix<float> ab = gather_ab(data, indices);
  Index h = data.height, w = data.width;
  if (net.variant == OutputVariant::DownsampleTarget) {
    const Index s = net.feature_stride();
    if (h % s != 0 || w % s != 0) throw std::invalid_argument("image size not divisible by the feature stride");
    const Index hw = h * w, ohw = (h / s) * (w / s);
    RowMatrix<float> pooled(2, n * ohw);
    for (Index i = 0; i < n; ++i)
      pooled.block(0, i * ohw, 2, ohw) = ab_to_matrix(average_pool(matrix_to_ab(RowMatrix<float>(ab.middleCols(i * hw, hw)), h, w), s));
    ab = std::move(pooled);
    h /= s;
    w /= s;
  }
  pair.target = encode_soft(ab, n, h, w, std::move(grid), k, sigma);
  return pair;
}

ClassifierPair make_training_pair_classifier(const RgbImage<float>& img, const ClassifierConfig& net,
                                             std::shared_ptr<const AbBinGrid> grid, int k, float sigma) {
  return make_classifier_batch(to_lab_dataset({img}), {0}, net, std::move(grid), k, sigma);
}

GanPair make_gan_batch(const LabDataset& data, const std::vector<Index>& indices) {
  GanPair pair;
  pair.lightness = normalized_lightness(data, indices);
  pair.ab = Tensor<float>(2, static_cast<Index>(indices.size()), data.height, data.width);
  pair.ab.data = gather_ab(data, indices) / static_cast<float>(kAbScale);
  return pair;
}

std::vector<Index> epoch_permutation(Index n, std::uint64_t seed, int epoch) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x636f6c6fu};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with explicit draws so the order does not depend on the
  // standard library's shuffle implementation.
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

// ---------------------------------------------------------------------------
// Classifier

namespace {

/// Copies of batch-norm running statistics, so that a rejected step leaves
/// no trace.
class BufferSnapshot {
 public:
  explicit BufferSnapshot(std::vector<nn::Buffer<float>> buffers) : buffers_(std::move(buffers)) {
    for (const auto& b : buffers_) values_.push_back(*b.value);
  }
  void restore() const {
    for (std::size_t i = 0; i < buffers_.size(); ++i) *buffers_[i].value = values_[i];
  }

 private:
  std::vector<nn::Buffer<float>> buffers_;
  std::vector<RowMatrix<float>> values_;
};

}  // namespace

ClassifierTrainer::ClassifierTrainer(const TrainConfig& config, std::shared_ptr<const AbBinGrid> grid)
    : grid_(std::move(grid)), net_(ClassifierConfig::standard(config.variant)) {
  net_.init(config.seed);
  adam_ = nn::Adam<float>(net_.parameters(), {config.lr_classifier, config.beta1_classifier, config.beta2, 1e-8});
}

float ClassifierTrainer::step(const ClassifierPair& batch) {
  adam_.zero_grad();
  const BufferSnapshot running(net_.buffers());
  const Tensor<float> logits = net_.forward(batch.input, nn::Mode::Train);
  if (!logits.data.allFinite()) {
    running.restore();
    return std::numeric_limits<float>::quiet_NaN();
  }
  const auto lg = softmax_classification_loss(logits.data, batch.target);
  if (!std::isfinite(lg.loss)) {
    running.restore();
    return lg.loss;
  }
  Tensor<float> dlogits = logits;
  dlogits.data = lg.gradient;
  net_.backward(dlogits);
  adam_.step();
  return lg.loss;
}

float ClassifierTrainer::loss(const ClassifierPair& batch) {
  const BufferSnapshot running(net_.buffers());
  const Tensor<float> logits = net_.forward(batch.input, nn::Mode::Train);
  running.restore();
  if (!logits.data.allFinite()) return std::numeric_limits<float>::quiet_NaN();
  return softmax_classification_loss(logits.data, batch.target).loss;
}

Checkpoint ClassifierTrainer::checkpoint() {
  Checkpoint ckpt = make_classifier_checkpoint(net_, *grid_);
  store(ckpt, {}, adam_.state(), "opt.");
  ckpt.meta["adam_steps"] = adam_.steps();
  return ckpt;
}

void ClassifierTrainer::restore(const Checkpoint& ckpt) {
  check_grid(ckpt, *grid_);
  if (ckpt.model() != "classifier") throw CheckpointError("not a classifier checkpoint");
  colorlab::restore(ckpt, net_.parameters(), net_.buffers(), "");
  colorlab::restore<float>(ckpt, {}, adam_.state(), "opt.");
  adam_.set_steps(ckpt.meta.value("adam_steps", 0LL));
}

// ---------------------------------------------------------------------------
// GAN

GanTrainer::GanTrainer(const TrainConfig& config, GeneratorConfig g, DiscriminatorConfig d)
    : lambda_(static_cast<float>(config.lambda)), gen_(std::move(g)), disc_(std::move(d)) {
  gen_.init(config.seed);
  disc_.init(config.seed + 1);
  adam_g_ = nn::Adam<float>(gen_.parameters(), {config.lr_g, config.beta1_gan, config.beta2, 1e-8});
  adam_d_ = nn::Adam<float>(disc_.parameters(), {config.lr_d, config.beta1_gan, config.beta2, 1e-8});
}

namespace {

std::vector<float> sigmoid_scores(const RowMatrix<float>& logits) {
  std::vector<float> s(static_cast<std::size_t>(logits.cols()));
  for (Index i = 0; i < logits.cols(); ++i) s[i] = nn::sigmoid(logits(0, i));
  return s;
}

float mean(const std::vector<float>& v) {
  double s = 0;
  for (float x : v) s += x;
  return v.empty() ? 0.0f : static_cast<float>(s / static_cast<double>(v.size()));
}

}  // namespace

GanLossTerms<float> GanTrainer::step(const GanPair& batch) {
  const Index n = batch.lightness.batch;
  const float inv_n = 1.0f / static_cast<float>(n);

  const BufferSnapshot running_g(gen_.buffers()), running_d(disc_.buffers());
  auto reject = [&] {
    running_g.restore();
    running_d.restore();
    GanLossTerms<float> t;
    t.d_real = std::nanf("");
    last_d_loss_ = std::nanf("");
    return t;
  };
  const Tensor<float> fake = gen_.forward(batch.lightness, nn::Mode::Train);
  if (!fake.data.allFinite() || !batch.ab.data.allFinite()) return reject();

  // Discriminator: minimize −log D(real) − log(1 − D(fake)).  d/dlogit of
  // −log σ(z) is σ(z) − 1 and of −log(1 − σ(z)) is σ(z).
  adam_d_.zero_grad();
  const RowMatrix<float> real_logits = disc_.forward(concat_channels(batch.lightness, batch.ab), nn::Mode::Train);
  const std::vector<float> real_scores = sigmoid_scores(real_logits);
  RowMatrix<float> d_real(1, n);
  for (Index i = 0; i < n; ++i) d_real(0, i) = (real_scores[i] - 1.0f) * inv_n;
  disc_.backward(d_real);
  const RowMatrix<float> fake_logits = disc_.forward(concat_channels(batch.lightness, fake), nn::Mode::Train);
  const std::vector<float> fake_scores = sigmoid_scores(fake_logits);
  RowMatrix<float> d_fake(1, n);
  for (Index i = 0; i < n; ++i) d_fake(0, i) = fake_scores[i] * inv_n;
  disc_.backward(d_fake);
  const float d_loss = discriminator_loss(real_scores, fake_scores);
  if (!std::isfinite(d_loss) || !real_logits.allFinite() || !fake_logits.allFinite()) return reject();
  last_d_loss_ = d_loss;
  adam_d_.step();

  // Generator: −log D(G(x)) through the updated discriminator, plus λ·L1.
  adam_g_.zero_grad();
  const RowMatrix<float> g_logits = disc_.forward(concat_channels(batch.lightness, fake), nn::Mode::Train);
  const std::vector<float> g_scores = sigmoid_scores(g_logits);
  GanLossTerms<float> terms = generator_loss(g_scores, fake.data, batch.ab.data, lambda_);
  terms.d_real = mean(real_scores);
  terms.d_fake = mean(fake_scores);
  if (!std::isfinite(terms.generator_total())) return terms;

  RowMatrix<float> dg(1, n);
  for (Index i = 0; i < n; ++i) dg(0, i) = adv_weight_ * (g_scores[i] - 1.0f) * inv_n;
  Tensor<float> dfake = slice_channels(disc_.backward(dg), 1, 2);
  const float l1_scale = lambda_ / static_cast<float>(fake.data.size());
  dfake.data += l1_scale * (fake.data - batch.ab.data).array().sign().matrix();
  gen_.backward(dfake);
  adam_g_.step();
  // The discriminator gradients from the generator pass are discarded at the
  // next zero_grad.
  return terms;
}

float GanTrainer::l1(const GanPair& batch) {
  const Tensor<float> fake = gen_.forward(batch.lightness, nn::Mode::Eval);
  return (fake.data - batch.ab.data).array().abs().mean();
}

Checkpoint GanTrainer::checkpoint() {
  Checkpoint ckpt = make_gan_checkpoint(gen_, disc_);
  store(ckpt, {}, adam_g_.state(), "optG.");
  store(ckpt, {}, adam_d_.state(), "optD.");
  ckpt.meta["adam_steps"] = adam_g_.steps();
  return ckpt;
}

void GanTrainer::restore(const Checkpoint& ckpt) {
  if (ckpt.model() != "gan") throw CheckpointError("not a GAN training checkpoint");
  colorlab::restore(ckpt, gen_.parameters(), gen_.buffers(), "G.");
  colorlab::restore(ckpt, disc_.parameters(), disc_.buffers(), "D.");
  colorlab::restore<float>(ckpt, {}, adam_g_.state(), "optG.");
  colorlab::restore<float>(ckpt, {}, adam_d_.state(), "optD.");
  const long long steps = ckpt.meta.value("adam_steps", 0LL);
  adam_g_.set_steps(steps);
  adam_d_.set_steps(steps);
}

// ---------------------------------------------------------------------------
// Driver

namespace {

std::string make_run_id(const TrainConfig& c) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return to_string(c.model) + "-s" + std::to_string(c.seed) + "-" +
         std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now).count());
}

void save_with_progress(Checkpoint ckpt, const TrainConfig& config, int epoch, long long step,
                        const std::filesystem::path& path) {
  ckpt.meta["epoch"] = epoch;
  ckpt.meta["step"] = step;
  ckpt.meta["train_config"] = config.to_json();
  ckpt.save(path);
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<RgbImage<float>>& train_images,
                  const std::vector<RgbImage<float>>& eval_images, const TrainOptions& options) {
  config.validate();
  if (train_images.empty()) throw std::invalid_argument("train: no training images");
  const std::filesystem::path out = config.out_dir;
  std::filesystem::create_directories(out);
  {
    std::ofstream cfg(out / "config.txt", std::ios::trunc);
    cfg << config.to_text();
  }
  auto say = [&](const std::string& s) {
    if (options.progress) options.progress(s);
  };

  const LabDataset data = to_lab_dataset(train_images);
  std::vector<RgbImage<float>> eval_set = eval_images;
  if (config.eval_images > 0 && static_cast<Index>(eval_set.size()) > config.eval_images)
    eval_set.resize(static_cast<std::size_t>(config.eval_images));

  std::shared_ptr<const AbBinGrid> grid = standard_bin_grid();
  std::unique_ptr<ClassifierTrainer> cls;
  std::unique_ptr<GanTrainer> gan;
  if (config.model == ModelKind::Classifier) {
    cls = std::make_unique<ClassifierTrainer>(config, grid);
    const Index side = cls->net().config().image_size;
    if (data.height != side || data.width != side)
      throw std::invalid_argument("train: classifier expects " + std::to_string(side) + "x" + std::to_string(side) +
                                  " images");
  } else {
    GeneratorConfig g;
    g.image_size = data.height;
    DiscriminatorConfig d;
    d.image_size = data.height;
    gan = std::make_unique<GanTrainer>(config, g, d);
  }
  auto snapshot = [&]() { return cls ? cls->checkpoint() : gan->checkpoint(); };

  int start_epoch = 0;
  long long step = 0;
  double best_psnr = -HUGE_VAL;
  std::string run_id = make_run_id(config);
  bool append_log = false;
  if (options.resume) {
    const Checkpoint ckpt = Checkpoint::load(*options.resume);
    if (cls) cls->restore(ckpt);
    else gan->restore(ckpt);
    start_epoch = ckpt.meta.value("epoch", 0);
    step = ckpt.meta.value("step", 0LL);
    if (ckpt.meta.contains("best_psnr") && ckpt.meta["best_psnr"].is_number())
      best_psnr = ckpt.meta["best_psnr"].get<double>();
    run_id = ckpt.meta.value("run_id", run_id);
    append_log = std::filesystem::exists(out / "run.jsonl");
    say("resuming from " + options.resume->string() + " at epoch " + std::to_string(start_epoch));
  }
  RunLog log(run_id, config.to_json(), out / "run.jsonl", append_log, step);

  TrainResult result;
  result.best_psnr = best_psnr;
  if (options.resume && std::filesystem::exists(out / "best.ckpt")) result.best_checkpoint = out / "best.ckpt";

  auto save = [&](const std::filesystem::path& path, int epoch) {
    Checkpoint ckpt = snapshot();
    ckpt.meta["run_id"] = run_id;
    if (std::isfinite(result.best_psnr)) ckpt.meta["best_psnr"] = result.best_psnr;
    save_with_progress(std::move(ckpt), config, epoch, step, path);
  };
  auto diverged = [&](int epoch, const std::string& what) {
    save(out / "diverged.ckpt", epoch);
    log.log(step, "diverged", 1);
    throw TrainingDiverged(what + " became non-finite at step " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch + 1) + "); wrote " + (out / "diverged.ckpt").string());
  };

  const auto cls_cfg = cls ? cls->net().config() : ClassifierConfig{};
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto order = epoch_permutation(data.count, config.seed, epoch);
    double loss_sum = 0;
    Index batches = 0;
    for (Index start = 0; start < data.count; start += config.batch_size) {
      const Index end = std::min(data.count, start + config.batch_size);
      const std::vector<Index> idx(order.begin() + start, order.begin() + end);
      ++step;
      if (cls) {
        const auto pair = make_classifier_batch(data, idx, cls_cfg, grid, config.soft_k,
                                                static_cast<float>(config.soft_sigma));
        const float loss = cls->step(pair);
        if (!std::isfinite(loss)) diverged(epoch, "classification loss");
        log.log(step, "train/loss", loss);
        loss_sum += loss;
      } else {
        const auto t = gan->step(make_gan_batch(data, idx));
        if (!std::isfinite(t.generator_total()) || !std::isfinite(t.d_real)) diverged(epoch, "GAN loss");
        log.log(step, "train/g_adv", t.g_adv);
        log.log(step, "train/g_l1", t.g_l1);
        log.log(step, "train/g_total", t.generator_total());
        log.log(step, "train/d_real", t.d_real);
        log.log(step, "train/d_fake", t.d_fake);
        log.log(step, "train/d_loss", gan->last_d_loss());
        loss_sum += t.generator_total();
      }
      ++batches;
    }
    const double epoch_loss = loss_sum / static_cast<double>(batches);
    log.log(step, "epoch/loss", epoch_loss);
    log.log(step, "epoch", epoch + 1);
    result.last_epoch_loss = epoch_loss;
    std::ostringstream line;
    line << "epoch " << (epoch + 1) << "/" << config.epochs << " step " << step << " loss " << std::setprecision(5)
         << epoch_loss;

    const bool last = epoch + 1 == config.epochs;
    if (!eval_set.empty() && config.eval_every > 0 && ((epoch + 1) % config.eval_every == 0 || last)) {
      // Score a snapshot, never the live weights.
      auto model = load_model(snapshot());
      const MetricReport r = evaluate(make_colorizer(model, static_cast<float>(config.temperature)), eval_set);
      log.log(step, "eval/psnr", r.psnr_db);
      log.log(step, "eval/ssim", r.ssim);
      for (double e : r.epsilons) {
        std::ostringstream name;
        name << "eval/pixel_acc@" << e;
        log.log(step, name.str(), r.pixel_acc.at(e));
      }
      line << " | eval psnr " << std::setprecision(4) << r.psnr_db << " ssim " << r.ssim;
      if (r.psnr_db > result.best_psnr) {
        result.best_psnr = r.psnr_db;
        save(out / "best.ckpt", epoch + 1);
        result.best_checkpoint = out / "best.ckpt";
        line << " (best)";
      }
    }
    say(line.str());
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 && !last)
      save(out / ("epoch_" + std::to_string(epoch + 1) + ".ckpt"), epoch + 1);
    result.epochs_run = epoch + 1;
  }

  save(out / "final.ckpt", config.epochs);
  result.final_checkpoint = out / "final.ckpt";
  result.steps = step;
  return result;
}

}  // namespace colorlab
