// Command-line front end: synth, train, eval, crossval, curve, ablate, bench.
// Every run writes a manifest first (command, resolved config, seed, input
// digests) and finalizes it with a digest of the outputs, so a run is
// reproducible from the manifest alone.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "neurossm/neurossm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

std::uint64_t fnv1a_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw neurossm::DataError("cannot open '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!is) break;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Groups every flag the subcommands share.
struct CommonOpts {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out_dir = "runs/out";
};

struct ModelOpts {
  std::vector<std::size_t> tau_set{1, 2, 3};
  std::size_t num_layers = 1;
  std::size_t d_state = 2;
  std::size_t d_conv = 1;
  std::size_t expand = 3;
  bool no_share_kernel = false;
  bool no_multiscale = false;
  bool no_differential = false;
  double eps = 1e-5;
};

struct TrainOpts {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 5e-4;
  double weight_decay = 4e-5;
  std::size_t crop_len = 0;  // 0 = no cropping
  bool coupled_weight_decay = false;
};

void add_model_flags(CLI::App* cmd, ModelOpts& opts) {
  cmd->add_option("--tau-set", opts.tau_set,
                  "temporal scale step sizes (default 1 2 3)");
  cmd->add_option("--layers", opts.num_layers, "number of stacked modules")
      ->capture_default_str();
  cmd->add_option("--d-state", opts.d_state, "latent state size per channel")
      ->capture_default_str();
  cmd->add_option("--d-conv", opts.d_conv, "depthwise convolution window")
      ->capture_default_str();
  cmd->add_option("--expand", opts.expand, "inner width expansion factor")
      ->capture_default_str();
  cmd->add_flag("--no-share-kernel", opts.no_share_kernel,
                "give the two streams separate SSM kernels");
  cmd->add_flag("--no-multiscale", opts.no_multiscale,
                "collapse the scale bank to tau=1");
  cmd->add_flag("--no-differential", opts.no_differential,
                "drop the differencing stream");
  cmd->add_option("--eps", opts.eps, "layer-norm epsilon")
      ->capture_default_str();
}

void add_train_flags(CLI::App* cmd, TrainOpts& opts) {
  cmd->add_option("--epochs", opts.epochs, "training epochs")
      ->capture_default_str();
  cmd->add_option("--batch-size", opts.batch_size, "mini-batch size")
      ->capture_default_str();
  cmd->add_option("--lr", opts.lr, "Adam learning rate")
      ->capture_default_str();
  cmd->add_option("--weight-decay", opts.weight_decay,
                  "decoupled weight decay")
      ->capture_default_str();
  cmd->add_option("--crop-len", opts.crop_len,
                  "training-time random crop length (0 disables)")
      ->capture_default_str();
  cmd->add_flag("--coupled-weight-decay", opts.coupled_weight_decay,
                "apply weight decay through gradients instead");
}

neurossm::ModelConfig make_model_config(const ModelOpts& m,
                                        std::size_t n_rois,
                                        std::size_t n_classes,
                                        std::uint64_t seed) {
  neurossm::ModelConfig cfg;
  cfg.n_rois = n_rois;
  cfg.n_classes = n_classes;
  cfg.num_layers = m.num_layers;
  cfg.tau_set = m.tau_set;
  cfg.d_state = m.d_state;
  cfg.d_conv = m.d_conv;
  cfg.expand = m.expand;
  cfg.share_kernel = !m.no_share_kernel;
  cfg.enable_multiscale = !m.no_multiscale;
  cfg.enable_differential = !m.no_differential;
  cfg.eps = m.eps;
  cfg.seed = seed;
  return cfg;
}

neurossm::TrainConfig make_train_config(const TrainOpts& t,
                                        const CommonOpts& common) {
  neurossm::TrainConfig cfg;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch_size;
  cfg.lr = t.lr;
  cfg.weight_decay = t.weight_decay;
  if (t.crop_len > 0) cfg.crop_len = t.crop_len;
  cfg.seed = common.seed;
  cfg.decoupled_weight_decay = !t.coupled_weight_decay;
  cfg.threads = common.threads;
  return cfg;
}

json model_config_json(const neurossm::ModelConfig& cfg) {
  json j;
  for (const auto& [k, v] : neurossm::config_to_entries(cfg)) j[k] = v;
  return j;
}

json train_config_json(const neurossm::TrainConfig& cfg) {
  json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["crop_len"] = cfg.crop_len ? json(*cfg.crop_len) : json(nullptr);
  j["seed"] = cfg.seed;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["decoupled_weight_decay"] = cfg.decoupled_weight_decay;
  j["threads"] = cfg.threads;
  return j;
}

// Manifest lifecycle: written before the run, finalized with results after.
struct RunManifest {
  fs::path path;
  json body;

  static RunManifest begin(const std::string& command, const CommonOpts& common,
                           json config,
                           const std::vector<fs::path>& inputs) {
    RunManifest m;
    fs::create_directories(common.out_dir);
    m.path = fs::path(common.out_dir) / "manifest.json";
    m.body["command"] = command;
    m.body["version"] = neurossm::version_string();
    m.body["seed"] = common.seed;
    m.body["threads"] = common.threads;
    m.body["out_dir"] = common.out_dir;
    m.body["config"] = std::move(config);
    m.body["started_at"] = iso_now();
    json digests = json::object();
    for (const auto& p : inputs) digests[p.string()] = hex64(fnv1a_file(p));
    m.body["input_digests"] = digests;
    m.body["status"] = "running";
    m.write();
    return m;
  }

  void finish(const std::vector<fs::path>& outputs) {
    json digests = json::object();
    for (const auto& p : outputs)
      if (fs::exists(p)) digests[p.string()] = hex64(fnv1a_file(p));
    body["output_digests"] = digests;
    body["finished_at"] = iso_now();
    body["status"] = "done";
    write();
  }

  void write() const {
    std::ofstream os(path);
    os << body.dump(2) << '\n';
  }
};

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

int cmd_synth(const CommonOpts& common, const std::string& spec_file,
              std::size_t n_per_class_flag) {
  const auto kv = neurossm::read_kv_file(spec_file);
  const auto spec = neurossm::synthetic_spec_from_entries(kv);
  std::size_t n_per_class = n_per_class_flag;
  if (n_per_class == 0) {
    auto it = kv.find("n_per_class");
    if (it == kv.end())
      throw neurossm::DataError(
          "synth: n_per_class missing (set it in the spec file or pass "
          "--n-per-class)");
    n_per_class = std::stoull(it->second);
  }
  json cfg;
  for (const auto& [k, v] : kv) cfg[k] = v;
  cfg["n_per_class_effective"] = n_per_class;
  auto manifest =
      RunManifest::begin("synth", common, cfg, {fs::path(spec_file)});

  const auto data = neurossm::make_synthetic(spec, n_per_class);
  neurossm::write_dataset_csv(data, common.out_dir);

  std::vector<fs::path> outputs = {fs::path(common.out_dir) / "manifest.csv"};
  for (const auto& seq : data)
    outputs.push_back(fs::path(common.out_dir) / (seq.subject_id + ".csv"));
  manifest.finish(outputs);
  std::cout << "synth: wrote " << data.size() << " sequences to "
            << common.out_dir << "\n";
  return kExitOk;
}

int cmd_train(const CommonOpts& common, const std::string& data_manifest,
              const ModelOpts& model_opts, const TrainOpts& train_opts) {
  auto data = neurossm::ingest_csv(data_manifest);
  std::size_t n_classes = 0;
  for (const auto& seq : data) n_classes = std::max(n_classes, seq.label + 1);
  const auto model_cfg =
      make_model_config(model_opts, data.front().series.cols(),
                        std::max<std::size_t>(n_classes, 2), common.seed);
  const auto train_cfg = make_train_config(train_opts, common);

  json cfg;
  cfg["model"] = model_config_json(model_cfg);
  cfg["train"] = train_config_json(train_cfg);
  cfg["data_manifest"] = data_manifest;
  auto manifest =
      RunManifest::begin("train", common, cfg, {fs::path(data_manifest)});

  auto model = neurossm::NeuroSsmModel::init(model_cfg);
  const auto idx = all_indices(data.size());
  const auto result = neurossm::train(model, data, idx, train_cfg);

  const fs::path ckpt = fs::path(common.out_dir) / "model.ckpt";
  const fs::path trace = fs::path(common.out_dir) / "loss_trace.csv";
  const fs::path report_csv = fs::path(common.out_dir) / "train_report.csv";
  neurossm::save_checkpoint(model, ckpt);
  neurossm::write_loss_trace_csv(result.loss_trace, trace);
  const auto report =
      neurossm::evaluate(model, data, idx, common.seed, "train");
  std::vector<neurossm::RunRecord> records{
      {"train", 100, common.seed, "train", report}};
  neurossm::write_run_records_csv(records, report_csv);

  manifest.body["final_train_accuracy"] = report.accuracy;
  manifest.body["final_train_macro_f1"] = report.macro_f1;
  if (report.auc) manifest.body["final_train_auc"] = *report.auc;
  manifest.finish({ckpt, trace, report_csv});
  std::cout << "train: checkpoint " << ckpt.string() << ", final train acc "
            << report.accuracy << "\n";
  return kExitOk;
}

int cmd_eval(const CommonOpts& common, const std::string& data_manifest,
             const std::string& checkpoint) {
  json cfg;
  cfg["checkpoint"] = checkpoint;
  cfg["data_manifest"] = data_manifest;
  auto manifest = RunManifest::begin(
      "eval", common, cfg, {fs::path(data_manifest), fs::path(checkpoint)});

  const auto data = neurossm::ingest_csv(data_manifest);
  const auto model = neurossm::load_checkpoint(checkpoint);
  const auto report = neurossm::evaluate(model, data, all_indices(data.size()),
                                         common.seed, "eval");
  std::vector<neurossm::RunRecord> records{
      {"eval", 100, common.seed, "eval", report}};
  const fs::path report_csv = fs::path(common.out_dir) / "eval_report.csv";
  const fs::path summary = fs::path(common.out_dir) / "eval_summary.json";
  neurossm::write_run_records_csv(records, report_csv);
  neurossm::write_summary_json(records, summary);

  manifest.body["accuracy"] = report.accuracy;
  manifest.body["macro_f1"] = report.macro_f1;
  if (report.auc) manifest.body["auc"] = *report.auc;
  manifest.finish({report_csv, summary});
  std::cout << "eval: acc " << report.accuracy << ", macro-F1 "
            << report.macro_f1 << "\n";
  return kExitOk;
}

int cmd_crossval(const CommonOpts& common, const std::string& data_manifest,
                 const ModelOpts& model_opts, const TrainOpts& train_opts) {
  const auto data = neurossm::ingest_csv(data_manifest);
  std::size_t n_classes = 0;
  for (const auto& seq : data) n_classes = std::max(n_classes, seq.label + 1);
  const auto model_cfg =
      make_model_config(model_opts, data.front().series.cols(),
                        std::max<std::size_t>(n_classes, 2), common.seed);
  const auto train_cfg = make_train_config(train_opts, common);

  json cfg;
  cfg["model"] = model_config_json(model_cfg);
  cfg["train"] = train_config_json(train_cfg);
  cfg["data_manifest"] = data_manifest;
  auto manifest =
      RunManifest::begin("crossval", common, cfg, {fs::path(data_manifest)});

  const auto result = neurossm::crossval(data, {model_cfg}, train_cfg);
  const fs::path report_csv = fs::path(common.out_dir) / "crossval_report.csv";
  const fs::path summary = fs::path(common.out_dir) / "crossval_summary.json";
  neurossm::write_run_records_csv(result.records, report_csv);
  neurossm::write_summary_json(result.records, summary);

  manifest.body["test_accuracy"] = result.test_report.accuracy;
  manifest.finish({report_csv, summary});
  std::cout << "crossval: test acc " << result.test_report.accuracy << "\n";
  return kExitOk;
}

int cmd_curve(const CommonOpts& common, const std::string& data_manifest,
              const ModelOpts& model_opts, const TrainOpts& train_opts,
              const std::vector<std::size_t>& fractions,
              std::size_t n_seeds) {
  const auto data = neurossm::ingest_csv(data_manifest);
  std::size_t n_classes = 0;
  for (const auto& seq : data) n_classes = std::max(n_classes, seq.label + 1);
  const auto model_cfg =
      make_model_config(model_opts, data.front().series.cols(),
                        std::max<std::size_t>(n_classes, 2), common.seed);
  const auto train_cfg = make_train_config(train_opts, common);

  json cfg;
  cfg["model"] = model_config_json(model_cfg);
  cfg["train"] = train_config_json(train_cfg);
  cfg["fractions"] = fractions;
  cfg["curve_seeds"] = n_seeds;
  cfg["data_manifest"] = data_manifest;
  auto manifest =
      RunManifest::begin("curve", common, cfg, {fs::path(data_manifest)});

  const auto records =
      neurossm::learning_curve(data, model_cfg, train_cfg, fractions, n_seeds);
  const fs::path report_csv = fs::path(common.out_dir) / "curve_report.csv";
  const fs::path summary = fs::path(common.out_dir) / "curve_summary.json";
  neurossm::write_run_records_csv(records, report_csv);
  neurossm::write_summary_json(records, summary);
  manifest.finish({report_csv, summary});
  std::cout << "curve: " << records.size() << " cells written\n";
  return kExitOk;
}

int cmd_ablate(const CommonOpts& common, const std::string& data_manifest,
               const ModelOpts& model_opts, const TrainOpts& train_opts,
               std::size_t n_seeds) {
  const auto data = neurossm::ingest_csv(data_manifest);
  std::size_t n_classes = 0;
  for (const auto& seq : data) n_classes = std::max(n_classes, seq.label + 1);
  const auto model_cfg =
      make_model_config(model_opts, data.front().series.cols(),
                        std::max<std::size_t>(n_classes, 2), common.seed);
  const auto train_cfg = make_train_config(train_opts, common);

  json cfg;
  cfg["model"] = model_config_json(model_cfg);
  cfg["train"] = train_config_json(train_cfg);
  cfg["grid_seeds"] = n_seeds;
  cfg["data_manifest"] = data_manifest;
  auto manifest =
      RunManifest::begin("ablate", common, cfg, {fs::path(data_manifest)});

  const auto records =
      neurossm::ablation_grid(data, model_cfg, train_cfg, n_seeds);
  const fs::path report_csv = fs::path(common.out_dir) / "ablation_report.csv";
  const fs::path summary = fs::path(common.out_dir) / "ablation_summary.json";
  neurossm::write_run_records_csv(records, report_csv);
  neurossm::write_summary_json(records, summary);
  manifest.finish({report_csv, summary});
  std::cout << "ablate: " << records.size() << " runs across "
            << neurossm::ablation_variants(model_cfg).size()
            << " variants\n";
  return kExitOk;
}

int cmd_bench(const CommonOpts& common, std::size_t n_rois,
              const std::vector<std::size_t>& t_values,
              const std::vector<std::size_t>& n_values, std::size_t fixed_t,
              std::size_t repeats, bool dual_stream) {
  neurossm::BenchConfig bench_cfg;
  bench_cfg.n_rois = n_rois;
  bench_cfg.repeats = repeats;
  bench_cfg.differential = dual_stream;
  bench_cfg.seed = common.seed == 0 ? 17 : common.seed;

  json cfg;
  cfg["n_rois"] = n_rois;
  cfg["T_values"] = t_values;
  cfg["N_values"] = n_values;
  cfg["fixed_T"] = fixed_t;
  cfg["repeats"] = repeats;
  cfg["dual_stream"] = dual_stream;
  auto manifest = RunManifest::begin("bench", common, cfg, {});

  const auto t_samples = neurossm::sweep_T(bench_cfg, t_values);
  neurossm::emit_scaling_report(t_samples,
                                fs::path(common.out_dir) / "sweep_T", "T");
  const auto n_samples = neurossm::sweep_N(bench_cfg, n_values, fixed_t);
  neurossm::emit_scaling_report(n_samples,
                                fs::path(common.out_dir) / "sweep_N", "N");

  manifest.finish({fs::path(common.out_dir) / "sweep_T" / "bench_raw.csv",
                   fs::path(common.out_dir) / "sweep_N" / "bench_raw.csv"});
  std::cout << "bench: reports under " << common.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NeuroSSM: multiscale differential selective state-space "
               "sequence classifier"};
  app.require_subcommand(1);
  app.fallthrough();  // common flags may follow the subcommand
  app.set_config("--config", "", "flat key=value config file (flags win)");

  CommonOpts common;
  app.add_option("--seed", common.seed, "root seed for all sub-streams")
      ->capture_default_str();
  app.add_option("--threads", common.threads,
                 "worker threads for independent runs")
      ->capture_default_str();
  app.add_option("--out", common.out_dir, "output directory")
      ->capture_default_str();

  // synth
  std::string spec_file;
  std::size_t n_per_class = 0;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--spec", spec_file, "synthetic spec key=value file")
      ->required();
  synth->add_option("--n-per-class", n_per_class,
                    "sequences per class (overrides the spec file)");

  // train / eval / crossval / curve / ablate
  std::string data_manifest, checkpoint;
  ModelOpts model_opts;
  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "train one model");
  train_cmd->add_option("--manifest", data_manifest, "dataset manifest CSV")
      ->required();
  add_model_flags(train_cmd, model_opts);
  add_train_flags(train_cmd, train_opts);

  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--manifest", data_manifest, "dataset manifest CSV")
      ->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")
      ->required();

  auto* crossval_cmd = app.add_subcommand(
      "crossval", "5-fold group cross-validation plus held-out test");
  crossval_cmd->add_option("--manifest", data_manifest, "dataset manifest CSV")
      ->required();
  add_model_flags(crossval_cmd, model_opts);
  add_train_flags(crossval_cmd, train_opts);

  std::vector<std::size_t> fractions{5, 10, 20, 50, 100};
  std::size_t curve_seeds = 5;
  auto* curve_cmd =
      app.add_subcommand("curve", "learning curve over training fractions");
  curve_cmd->add_option("--manifest", data_manifest, "dataset manifest CSV")
      ->required();
  curve_cmd->add_option("--fractions", fractions,
                        "training-set percentages (default 5 10 20 50 100)");
  curve_cmd->add_option("--curve-seeds", curve_seeds, "seeds per fraction")
      ->capture_default_str();
  add_model_flags(curve_cmd, model_opts);
  add_train_flags(curve_cmd, train_opts);

  std::size_t grid_seeds = 5;
  auto* ablate_cmd = app.add_subcommand(
      "ablate", "multiscale/differential and tau-set ablation grid");
  ablate_cmd->add_option("--manifest", data_manifest, "dataset manifest CSV")
      ->required();
  ablate_cmd->add_option("--grid-seeds", grid_seeds, "seeds per variant")
      ->capture_default_str();
  add_model_flags(ablate_cmd, model_opts);
  add_train_flags(ablate_cmd, train_opts);

  std::size_t bench_n = 64;
  std::vector<std::size_t> bench_t_values{256, 512, 1024, 2048, 4096};
  std::vector<std::size_t> bench_n_values{50, 100, 200, 400};
  std::size_t bench_fixed_t = 256;
  std::size_t bench_repeats = 5;
  bool bench_dual = false;
  auto* bench_cmd =
      app.add_subcommand("bench", "empirical complexity verification");
  bench_cmd->add_option("--n-rois", bench_n, "width for the T sweep")
      ->capture_default_str();
  bench_cmd->add_option("--sweep-T", bench_t_values, "sequence lengths");
  bench_cmd->add_option("--sweep-N", bench_n_values, "widths");
  bench_cmd->add_option("--fixed-T", bench_fixed_t,
                        "sequence length for the N sweep")
      ->capture_default_str();
  bench_cmd->add_option("--repeats", bench_repeats, "timing repeats (>=5)")
      ->capture_default_str();
  bench_cmd->add_flag("--dual", bench_dual,
                      "benchmark both streams instead of one per scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, spec_file, n_per_class);
    if (train_cmd->parsed())
      return cmd_train(common, data_manifest, model_opts, train_opts);
    if (eval_cmd->parsed()) return cmd_eval(common, data_manifest, checkpoint);
    if (crossval_cmd->parsed())
      return cmd_crossval(common, data_manifest, model_opts, train_opts);
    if (curve_cmd->parsed())
      return cmd_curve(common, data_manifest, model_opts, train_opts,
                       fractions, curve_seeds);
    if (ablate_cmd->parsed())
      return cmd_ablate(common, data_manifest, model_opts, train_opts,
                        grid_seeds);
    if (bench_cmd->parsed())
      return cmd_bench(common, bench_n, bench_t_values, bench_n_values,
                       bench_fixed_t, bench_repeats, bench_dual);
  } catch (const neurossm::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const neurossm::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
