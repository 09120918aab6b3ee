// colorlab: fetch CIFAR-10, train either colorizer, evaluate, colorize single
// images and render comparison grids.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.

#include "colorlab/cifar.hpp"
#include "colorlab/colorize.hpp"
#include "colorlab/fetch.hpp"
#include "colorlab/grid.hpp"
#include "colorlab/image_io.hpp"
#include "colorlab/metrics.hpp"
#include "colorlab/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace colorlab;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDiverged = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<RgbImage<float>> to_images(const std::vector<Sample>& samples) {
  std::vector<RgbImage<float>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.image());
  return out;
}

fs::path data_root(const std::string& flag, const std::string& configured = "") {
  std::optional<fs::path> explicit_root;
  if (!flag.empty()) explicit_root = flag;
  else if (!configured.empty()) explicit_root = configured;
  return resolve_data_root(explicit_root);
}

std::string image_name(Index i) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << i << ".png";
  return os.str();
}

// --- fetch-data -------------------------------------------------------------

struct FetchArgs {
  std::string data_dir, url = kCifarUrl, md5 = kCifarArchiveMd5;
  bool keep_archive = false;
};

int run_fetch(const FetchArgs& a) {
  FetchOptions o;
  o.root = data_root(a.data_dir);
  o.url = a.url;
  o.archive_md5 = a.md5;
  o.keep_archive = a.keep_archive;
  const FetchResult r = fetch_cifar10(o);
  std::cout << (r.already_present ? "CIFAR-10 already present and verified in " : "CIFAR-10 installed in ")
            << batch_directory(o.root).string() << " (" << r.files.size() << " files)\n";
  return 0;
}

// --- train --------------------------------------------------------------------

struct TrainArgs {
  std::string model, variant, config, out, data_dir, resume;
  std::optional<std::uint64_t> seed;
  std::optional<Index> subset, batch_size, eval_images;
  std::optional<int> epochs;
};

int run_train(const TrainArgs& a) {
  // Everything is validated before any file is touched.
  TrainConfig c = TrainConfig::defaults(parse_model(a.model));
  if (!a.config.empty()) {
    c.load_file(a.config);
    if (c.model != parse_model(a.model)) throw UsageError("--model disagrees with the config file");
    // An explicit epochs key in the file wins over the per-model default.
  }
  if (!a.variant.empty()) c.variant = parse_variant(a.variant);
  if (a.seed) c.seed = *a.seed;
  if (a.subset) c.subset = *a.subset;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.eval_images) c.eval_images = *a.eval_images;
  if (!a.out.empty()) c.out_dir = a.out;
  if (!a.data_dir.empty()) c.data_dir = a.data_dir;
  c.validate();
  std::optional<fs::path> resume;
  if (!a.resume.empty()) {
    if (!fs::exists(a.resume)) throw UsageError("--resume: no such checkpoint " + a.resume);
    resume = a.resume;
  }

  const fs::path root = data_root(a.data_dir, c.data_dir);
  if (!dataset_available(root))
    throw DataError("CIFAR-10 not found under " + root.string() + " (run `colorlab fetch-data` or set COLORLAB_DATA_DIR)");
  DatasetSpec train_spec{root, Split::Train, c.subset, true};
  const auto train_images = to_images(load_cifar10(train_spec));
  std::vector<RgbImage<float>> eval_images;
  if (c.eval_every > 0) {
    const Index cap = c.eval_images > 0 ? (c.eval_images + kCifarClasses - 1) / kCifarClasses : 0;
    eval_images = to_images(load_cifar10({root, Split::Test, cap, true}));
  }
  std::cerr << "training " << to_string(c.model) << " on " << train_images.size() << " images, evaluating on "
            << std::min<Index>(static_cast<Index>(eval_images.size()), c.eval_images > 0 ? c.eval_images : 1 << 30)
            << "\n";

  TrainOptions opts;
  opts.resume = resume;
  opts.progress = [](const std::string& s) { std::cerr << s << std::endl; };
  const TrainResult r = train(c, train_images, eval_images, opts);
  std::cout << "final checkpoint: " << r.final_checkpoint.string() << "\n";
  if (!r.best_checkpoint.empty())
    std::cout << "best checkpoint:  " << r.best_checkpoint.string() << " (eval PSNR " << r.best_psnr << " dB)\n";
  return 0;
}

// --- evaluate -------------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> checkpoints, baselines;
  std::string split = "test", data_dir, save_dir, predictions, format = "table", report;
  Index subset = 0;
  double temperature = 0.38;
};

void print_header(std::ostream& os, const std::vector<double>& eps) {
  os << std::left << std::setw(24) << "Method";
  for (double e : eps) {
    std::ostringstream h;
    h << "Pixel-Acc (e=" << e * 100 << "%)";
    os << " | " << h.str();
  }
  os << " | PSNR (dB) | SSIM\n";
}

int run_evaluate(const EvaluateArgs& a) {
  for (const auto& b : a.baselines)
    if (b != "grayscale" && b != "identity") throw UsageError("--baseline must be grayscale or identity");
  if (a.checkpoints.empty() && a.baselines.empty() && a.predictions.empty())
    throw UsageError("nothing to evaluate: give --checkpoint, --baseline or --predictions");
  if (a.format != "table" && a.format != "text" && a.format != "csv" && a.format != "json")
    throw UsageError("--format must be table, text, csv or json");
  const Split split = parse_split(a.split);

  std::vector<std::pair<std::string, std::shared_ptr<LoadedModel>>> models;
  for (const auto& path : a.checkpoints) {
    auto m = load_model(fs::path(path));
    models.emplace_back(m->label() + " (" + fs::path(path).filename().string() + ")", m);
  }

  const fs::path root = data_root(a.data_dir);
  if (!dataset_available(root))
    throw DataError("CIFAR-10 not found under " + root.string() + " (run `colorlab fetch-data` or set COLORLAB_DATA_DIR)");
  const auto truth = to_images(load_cifar10({root, split, a.subset, true}));

  std::vector<std::pair<std::string, MetricReport>> reports;
  Index failures = 0;
  for (const auto& b : a.baselines) {
    if (b == "grayscale") reports.emplace_back("grayscale baseline", evaluate(grayscale_colorizer(), truth));
    else reports.emplace_back("identity", evaluate_predictions(truth, truth));
  }
  for (const auto& [label, model] : models) {
    EvaluateOptions opts;
    fs::path dir;
    if (!a.save_dir.empty()) {
      dir = fs::path(a.save_dir) / (model->label() + (models.size() > 1 ? "_" + std::to_string(reports.size()) : ""));
      fs::create_directories(dir);
      opts.on_prediction = [dir](Index i, const RgbImage<float>& img) { write_png(dir / image_name(i), img); };
    }
    reports.emplace_back(label, evaluate(make_colorizer(model, static_cast<float>(a.temperature)), truth, opts));
  }
  if (!a.predictions.empty()) {
    std::vector<RgbImage<float>> preds;
    for (Index i = 0; i < static_cast<Index>(truth.size()); ++i) {
      const fs::path p = fs::path(a.predictions) / image_name(i);
      if (!fs::exists(p)) throw DataError("missing prediction " + p.string());
      preds.push_back(read_png(p));
    }
    reports.emplace_back("predictions (" + a.predictions + ")", evaluate_predictions(preds, truth));
  }

  std::ostringstream out;
  if (a.format == "table") {
    print_header(out, kDefaultEpsilons);
    for (const auto& [label, r] : reports) out << r.table_row(label) << "\n";
    out << "\nper-channel pixel accuracy (R, G, B):\n";
    for (const auto& [label, r] : reports)
      for (double e : r.epsilons) {
        const auto& pc = r.pixel_acc_per_channel.at(e);
        out << "  " << std::left << std::setw(24) << label << " e=" << e << "  " << std::fixed << std::setprecision(5)
            << pc[0] << "  " << pc[1] << "  " << pc[2] << "\n";
      }
  } else if (a.format == "json") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [label, r] : reports) {
      auto rj = r.to_json();
      rj["label"] = label;
      j.push_back(rj);
    }
    out << j.dump(2) << "\n";
  } else {
    for (const auto& [label, r] : reports) out << "# " << label << "\n" << (a.format == "csv" ? r.to_csv() : r.to_text());
  }
  for (const auto& [label, r] : reports) failures += r.failures;
  std::cout << out.str();
  if (!a.report.empty()) {
    std::ofstream f(a.report);
    f << out.str();
  }
  if (failures > 0) {
    std::cerr << failures << " image(s) failed to process\n";
    return kExitData;
  }
  return 0;
}

// --- colorize -------------------------------------------------------------------

struct ColorizeArgs {
  std::string checkpoint, input, output;
  double temperature = 0.38;
};

int run_colorize(const ColorizeArgs& a) {
  auto model = load_model(fs::path(a.checkpoint));
  const RgbImage<float> input = read_png(a.input);
  const RgbImage<float> out = colorize_image(make_colorizer(model, static_cast<float>(a.temperature)), input);
  write_png(a.output, out);
  std::cout << "wrote " << a.output << " (" << out.width() << "x" << out.height() << ", " << model->label() << ")\n";
  return 0;
}

// --- grid -----------------------------------------------------------------------

struct GridArgs {
  std::vector<std::string> checkpoints, inputs;
  std::vector<Index> ids;
  Index count = 0;
  std::string split = "test", data_dir, output;
  Index scale = 4;
  bool no_labels = false;
  double temperature = 0.38;
};

int run_grid(const GridArgs& a) {
  if (a.inputs.empty() && a.ids.empty() && a.count <= 0) throw UsageError("give --input, --ids or --count");
  if (!a.inputs.empty() && (!a.ids.empty() || a.count > 0)) throw UsageError("--input cannot be combined with --ids/--count");
  if (a.scale < 1) throw UsageError("--scale must be >= 1");

  std::vector<std::shared_ptr<LoadedModel>> models;
  std::vector<std::string> labels;
  for (const auto& path : a.checkpoints) {
    models.push_back(load_model(fs::path(path)));
    labels.push_back(models.back()->label());
  }

  std::vector<RgbImage<float>> truth;
  if (!a.inputs.empty()) {
    for (const auto& p : a.inputs) truth.push_back(read_png(p));
  } else {
    const fs::path root = data_root(a.data_dir);
    if (!dataset_available(root)) throw DataError("CIFAR-10 not found under " + root.string());
    std::vector<Index> ids = a.ids;
    if (ids.empty())
      for (Index i = 0; i < a.count; ++i) ids.push_back(i);
    Cifar10Reader reader(split_files(root, parse_split(a.split)));
    Sample s;
    std::map<Index, RgbImage<float>> found;
    const Index max_id = *std::max_element(ids.begin(), ids.end());
    while (reader.next(s) && s.index <= max_id) found[s.index] = s.image();
    for (Index id : ids) {
      if (!found.count(id)) throw DataError("image id " + std::to_string(id) + " is out of range");
      truth.push_back(found[id]);
    }
  }

  std::vector<GridRow> rows;
  for (const auto& img : truth) {
    GridRow row;
    row.grayscale = grayscale_of(img);
    for (const auto& m : models) row.outputs.push_back(colorize_image(make_colorizer(m, static_cast<float>(a.temperature)), img));
    row.truth = img;
    rows.push_back(std::move(row));
  }
  GridOptions opts;
  opts.scale = a.scale;
  opts.labels = !a.no_labels;
  const RgbImage<float> canvas = render_grid(rows, labels, opts);
  write_png(a.output, canvas);
  std::cout << "wrote " << a.output << " (" << rows.size() << " rows x " << labels.size() + 2 << " columns, "
            << canvas.width() << "x" << canvas.height() << " px)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"colorlab: automatic colorization of grayscale images (classification and GAN models)"};
  app.require_subcommand(1);

  FetchArgs fetch;
  auto* cmd_fetch = app.add_subcommand("fetch-data", "Download, verify and unpack CIFAR-10 (binary version)");
  cmd_fetch->add_option("--data-dir", fetch.data_dir, "Dataset root (default: $COLORLAB_DATA_DIR or data/cifar10)");
  cmd_fetch->add_option("--url", fetch.url, "Archive URL");
  cmd_fetch->add_option("--md5", fetch.md5, "Expected archive MD5");
  cmd_fetch->add_flag("--keep-archive", fetch.keep_archive, "Keep the downloaded .tar.gz");

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train a colorization model on CIFAR-10");
  cmd_train->add_option("--model", tr.model, "classifier or gan")->required()->check(CLI::IsMember({"classifier", "gan"}));
  cmd_train->add_option("--variant", tr.variant, "Classifier output layer: bilinear, deconv or downsample")
      ->check(CLI::IsMember({"bilinear", "deconv", "downsample"}));
  cmd_train->add_option("--config", tr.config, "key = value config file")->check(CLI::ExistingFile);
  cmd_train->add_option("--seed", tr.seed, "Seed for weight init and batch order");
  cmd_train->add_option("--subset", tr.subset, "Per-class cap on training images (0 = all)")->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--epochs", tr.epochs, "Override the epoch count")->check(CLI::PositiveNumber);
  cmd_train->add_option("--batch-size", tr.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  cmd_train->add_option("--eval-images", tr.eval_images, "Test images scored after each epoch")->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--out", tr.out, "Output directory");
  cmd_train->add_option("--data-dir", tr.data_dir, "Dataset root");
  cmd_train->add_option("--resume", tr.resume, "Continue from a training checkpoint");

  EvaluateArgs ev;
  auto* cmd_eval = app.add_subcommand("evaluate", "Score models on a CIFAR-10 split");
  cmd_eval->add_option("--checkpoint", ev.checkpoints, "Model checkpoint (repeatable)");
  cmd_eval->add_option("--baseline", ev.baselines, "grayscale or identity (repeatable)");
  cmd_eval->add_option("--predictions", ev.predictions, "Directory of saved predictions (00000.png, ...)");
  cmd_eval->add_option("--split", ev.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  cmd_eval->add_option("--subset", ev.subset, "Per-class cap (0 = whole split)")->check(CLI::NonNegativeNumber);
  cmd_eval->add_option("--data-dir", ev.data_dir, "Dataset root");
  cmd_eval->add_option("--save-dir", ev.save_dir, "Write every colorized image here");
  cmd_eval->add_option("--format", ev.format, "table, text, csv or json");
  cmd_eval->add_option("--report", ev.report, "Also write the report to this file");
  cmd_eval->add_option("--temperature", ev.temperature, "Annealed-mean temperature")->check(CLI::PositiveNumber);

  ColorizeArgs co;
  auto* cmd_col = app.add_subcommand("colorize", "Colorize one PNG");
  cmd_col->add_option("--checkpoint", co.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  cmd_col->add_option("--input", co.input, "Input PNG (gray or color)")->required()->check(CLI::ExistingFile);
  cmd_col->add_option("--output", co.output, "Output PNG")->required();
  cmd_col->add_option("--temperature", co.temperature, "Annealed-mean temperature")->check(CLI::PositiveNumber);

  GridArgs gr;
  auto* cmd_grid = app.add_subcommand("grid", "Render grayscale | models... | ground truth comparison grid");
  cmd_grid->add_option("--checkpoint", gr.checkpoints, "Model checkpoint, one column each (repeatable)")
      ->check(CLI::ExistingFile);
  cmd_grid->add_option("--input", gr.inputs, "Ground-truth PNG, one row each (repeatable)")->check(CLI::ExistingFile);
  cmd_grid->add_option("--ids", gr.ids, "Dataset image indices, one row each");
  cmd_grid->add_option("--count", gr.count, "Use the first N dataset images");
  cmd_grid->add_option("--split", gr.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  cmd_grid->add_option("--data-dir", gr.data_dir, "Dataset root");
  cmd_grid->add_option("--scale", gr.scale, "Tile magnification");
  cmd_grid->add_flag("--no-labels", gr.no_labels, "Omit the caption band");
  cmd_grid->add_option("--temperature", gr.temperature, "Annealed-mean temperature")->check(CLI::PositiveNumber);
  cmd_grid->add_option("--out", gr.output, "Output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*cmd_fetch) return run_fetch(fetch);
    if (*cmd_train) return run_train(tr);
    if (*cmd_eval) return run_evaluate(ev);
    if (*cmd_col) return run_colorize(co);
    if (*cmd_grid) return run_grid(gr);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ImageError& e) {
    std::cerr << "image error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
