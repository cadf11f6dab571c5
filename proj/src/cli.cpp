#include "sevit/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sevit/csv.hpp"
#include "sevit/datapipe.hpp"
#include "sevit/evalkit.hpp"
#include "sevit/model.hpp"
#include "sevit/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace sevit {
namespace {

/// Everything a command may need. Loaded from --config, then overridden by
/// flags. Field names match the JSON keys.
struct RunConfig {
  std::string dataset;       // raw CSV
  std::string schema;        // schema JSON
  std::string prepared_dir;  // directory holding train.csv / val.csv
  std::string weights;
  std::string out;
  std::string dataset_name;

  Balance balance = Balance::none;
  BalanceOrder balance_order = BalanceOrder::before_split;
  double train_fraction = 0.8;
  bool scale = true;
  Index smote_k = 5;

  Variant variant = Variant::parallel_h32;
  Index embed = 32;
  Index se_ratio = 4;
  Index hidden = 0;  // 0: the variant's own width
  Index steps = 0;   // 0: number of dataset features
  Index n_classes = 0;  // 0: number of dataset classes

  TrainConfig train;

  int latency_warmup = 10;
  int latency_reps = 1000;

  Index synth_instances = 3000;
  Index synth_features = 20;
  int synth_classes = 6;
  double synth_separation = 1.0;

  std::uint64_t seed = 42;
};

template <typename T>
void take(const ordered_json& j, const char* key, T& into) {
  if (j.contains(key) && !j.at(key).is_null()) into = j.at(key).get<T>();
}

void reject_unknown(const ordered_json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("config: unknown key '" + where + key + "'");
  }
}

RunConfig parse_run_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  try {
    reject_unknown(j, {"dataset", "schema", "prepared_dir", "weights", "out", "dataset_name", "balance",
                       "balance_order", "train_fraction", "scale", "smote_k", "model", "train", "latency",
                       "synth", "seed"},
                   "");
    take(j, "dataset", c.dataset);
    take(j, "schema", c.schema);
    take(j, "prepared_dir", c.prepared_dir);
    take(j, "weights", c.weights);
    take(j, "out", c.out);
    take(j, "dataset_name", c.dataset_name);
    if (j.contains("balance")) c.balance = parse_balance(j["balance"].get<std::string>());
    if (j.contains("balance_order")) c.balance_order = parse_balance_order(j["balance_order"].get<std::string>());
    take(j, "train_fraction", c.train_fraction);
    take(j, "scale", c.scale);
    take(j, "smote_k", c.smote_k);
    take(j, "seed", c.seed);
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown(m, {"variant", "embed", "se_ratio", "hidden", "steps", "n_classes"}, "model.");
      if (m.contains("variant")) {
        const auto& v = m["variant"];
        c.variant = parse_variant(v.is_string() ? v.get<std::string>() : std::to_string(v.get<int>()));
      }
      take(m, "embed", c.embed);
      take(m, "se_ratio", c.se_ratio);
      take(m, "hidden", c.hidden);
      take(m, "steps", c.steps);
      take(m, "n_classes", c.n_classes);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      reject_unknown(t, {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "eps_adam", "shuffle"},
                     "train.");
      take(t, "epochs", c.train.epochs);
      take(t, "batch_size", c.train.batch_size);
      take(t, "learning_rate", c.train.learning_rate);
      take(t, "beta1", c.train.beta1);
      take(t, "beta2", c.train.beta2);
      take(t, "eps_adam", c.train.eps_adam);
      take(t, "shuffle", c.train.shuffle);
    }
    if (j.contains("latency")) {
      const auto& l = j["latency"];
      reject_unknown(l, {"warmup", "reps"}, "latency.");
      take(l, "warmup", c.latency_warmup);
      take(l, "reps", c.latency_reps);
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      reject_unknown(s, {"instances", "features", "classes", "separation"}, "synth.");
      take(s, "instances", c.synth_instances);
      take(s, "features", c.synth_features);
      take(s, "classes", c.synth_classes);
      take(s, "separation", c.synth_separation);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["dataset"] = c.dataset;
  j["schema"] = c.schema;
  j["prepared_dir"] = c.prepared_dir;
  j["weights"] = c.weights;
  j["out"] = c.out;
  j["dataset_name"] = c.dataset_name;
  j["balance"] = to_string(c.balance);
  j["balance_order"] = to_string(c.balance_order);
  j["train_fraction"] = c.train_fraction;
  j["scale"] = c.scale;
  j["smote_k"] = c.smote_k;
  j["model"] = {{"variant", static_cast<int>(c.variant)}, {"embed", c.embed}, {"se_ratio", c.se_ratio},
                {"hidden", c.hidden}, {"steps", c.steps}, {"n_classes", c.n_classes}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"eps_adam", c.train.eps_adam},
                {"shuffle", c.train.shuffle}};
  j["latency"] = {{"warmup", c.latency_warmup}, {"reps", c.latency_reps}};
  j["synth"] = {{"instances", c.synth_instances},
                {"features", c.synth_features},
                {"classes", c.synth_classes},
                {"separation", c.synth_separation}};
  j["seed"] = c.seed;
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << content;
  if (!os) throw DataError("failed writing " + path.string());
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path run_directory(RunConfig& cfg, const std::string& command) {
  if (cfg.out.empty()) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream name;
    name << "runs/" << command << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S");
    cfg.out = name.str();
  }
  fs::create_directories(cfg.out);
  return cfg.out;
}

PreprocessOptions preprocess_options(const RunConfig& cfg) {
  PreprocessOptions o;
  o.balance = cfg.balance;
  o.order = cfg.balance_order;
  o.train_fraction = cfg.train_fraction;
  o.scale = cfg.scale;
  o.smote_k = cfg.smote_k;
  o.seed = cfg.seed;
  return o;
}

ordered_json counts_json(const std::vector<std::string>& names, const std::vector<std::size_t>& counts) {
  ordered_json j = ordered_json::object();
  for (std::size_t c = 0; c < counts.size(); ++c) j[names[c]] = counts[c];
  return j;
}

ordered_json summary_json(const PreparedData& p, const RunConfig& cfg) {
  ordered_json j;
  j["rows_kept"] = p.summary.rows_kept;
  j["dropped_rows"] = p.summary.dropped_rows;
  j["features"] = p.train.n_features();
  j["classes"] = p.train.class_names;
  j["balance"] = to_string(cfg.balance);
  j["balance_order"] = to_string(cfg.balance_order);
  j["counts_before"] = counts_json(p.train.class_names, p.summary.counts_before);
  j["counts_after_balancing"] = counts_json(p.train.class_names, p.summary.counts_after);
  j["train_size"] = p.summary.train_size;
  j["val_size"] = p.summary.val_size;
  j["train_counts"] = counts_json(p.train.class_names, p.train.class_counts());
  j["val_counts"] = counts_json(p.val.class_names, p.val.class_counts());
  return j;
}

/// Runs the preprocessing pipeline and writes train.csv, val.csv and the
/// summary into dir.
PreparedData run_preprocess(const RunConfig& cfg, const fs::path& dir, std::ostream& out) {
  if (cfg.dataset.empty()) throw ConfigError("dataset: no CSV path given (--data or config 'dataset')");
  if (cfg.schema.empty()) throw ConfigError("schema: no schema path given (--schema or config 'schema')");
  const SchemaConfig schema = load_schema(cfg.schema);
  const RawTable raw = load_csv(cfg.dataset, schema);
  PreparedData p = preprocess(raw, schema, preprocess_options(cfg));
  save_dataset(p.train, (dir / "train.csv").string());
  save_dataset(p.val, (dir / "val.csv").string());
  write_file(dir / "preprocess_summary.json", dump(summary_json(p, cfg)));
  out << "preprocess: kept " << p.summary.rows_kept << " rows, dropped " << p.summary.dropped_rows
      << ", train " << p.summary.train_size << ", val " << p.summary.val_size << "\n";
  return p;
}

struct Splits {
  Dataset train;
  Dataset val;
};

Splits obtain_splits(const RunConfig& cfg, const fs::path& dir, std::ostream& out) {
  if (!cfg.prepared_dir.empty()) {
    const fs::path pd(cfg.prepared_dir);
    return {load_dataset((pd / "train.csv").string()), load_dataset((pd / "val.csv").string())};
  }
  auto p = run_preprocess(cfg, dir, out);
  return {std::move(p.train), std::move(p.val)};
}

ModelSpec model_spec(const RunConfig& cfg, Variant variant, const Dataset& ds) {
  ModelSpec s = ModelSpec::for_variant(variant, ds.n_features(), cfg.n_classes > 0 ? cfg.n_classes : ds.n_classes());
  if (cfg.steps > 0 && cfg.steps != ds.n_features()) {
    throw ShapeError("model.steps = " + std::to_string(cfg.steps) + " but the dataset has " +
                     std::to_string(ds.n_features()) + " features");
  }
  s.embed = cfg.embed;
  s.se_ratio = cfg.se_ratio;
  if (cfg.hidden > 0) s.hidden = cfg.hidden;
  s.validate();
  return s;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  return t;
}

void print_epoch(std::ostream& out, const EpochRecord& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch %3d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f\n", e.epoch,
                e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy);
  out << buf << std::flush;
}

void write_eval_files(const EvalReport& r, const fs::path& dir) {
  write_file(dir / "report.json", dump(to_json(r)));
  write_file(dir / "report.txt", format_report(r));
  std::ostringstream cm;
  write_confusion_csv(r, cm);
  write_file(dir / "confusion_matrix.csv", cm.str());
  for (const auto& roc : r.roc) {
    std::ostringstream os;
    write_roc_csv(roc, os);
    write_file(dir / ("roc_class_" + std::to_string(roc.positive_class) + ".csv"), os.str());
  }
}

int cmd_synth(RunConfig cfg, std::ostream& out) {
  const fs::path dir = run_directory(cfg, "synth");
  Rng rng(cfg.seed);
  BlobOptions bo;
  bo.instances = cfg.synth_instances;
  bo.features = cfg.synth_features;
  bo.classes = cfg.synth_classes;
  bo.separation = cfg.synth_separation;
  const Dataset blobs = make_gaussian_blobs(bo, rng);
  static const char* kProtocols[] = {"icmp", "tcp", "udp"};

  std::ostringstream csv_text;
  csv_text << "frame.time";
  for (const auto& f : blobs.feature_names) csv_text << ',' << f;
  csv_text << ",proto,Attack_type\n";
  for (Index i = 0; i < blobs.size(); ++i) {
    csv_text << "t" << i;
    for (Index j = 0; j < blobs.n_features(); ++j) csv_text << ',' << g17(blobs.features(i, j));
    csv_text << ',' << kProtocols[rng.below(3)] << ',' << blobs.class_names[static_cast<std::size_t>(blobs.labels[static_cast<std::size_t>(i)])]
             << '\n';
  }
  write_file(dir / "synthetic.csv", csv_text.str());
  ordered_json schema;
  schema["label_column"] = "Attack_type";
  schema["drop_columns"] = {"frame.time"};
  schema["categorical_columns"] = {"proto"};
  write_file(dir / "synthetic.schema.json", dump(schema));
  write_file(dir / "config.json", dump(to_json(cfg)));
  out << "synth: wrote " << blobs.size() << " rows with " << blobs.n_features() + 1 << " features to "
      << (dir / "synthetic.csv").string() << "\n";
  return kExitOk;
}

int cmd_preprocess(RunConfig cfg, std::ostream& out) {
  const fs::path dir = run_directory(cfg, "preprocess");
  write_file(dir / "config.json", dump(to_json(cfg)));
  run_preprocess(cfg, dir, out);
  out << "outputs in " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(RunConfig cfg, std::ostream& out) {
  const fs::path dir = run_directory(cfg, "train");
  write_file(dir / "config.json", dump(to_json(cfg)));
  const Splits data = obtain_splits(cfg, dir, out);
  const ModelSpec spec = model_spec(cfg, cfg.variant, data.train);
  Model model = build_model(spec, cfg.seed);
  out << "train: variant " << variant_label(spec.variant) << " (" << variant_name(spec.variant) << "), "
      << model.count_params() << " parameters, " << data.train.size() << " train / " << data.val.size()
      << " val instances\n";
  const TrainHistory history =
      train(model, data.train, data.val, train_config(cfg), [&](const EpochRecord& e) { print_epoch(out, e); });
  save_model(model, (dir / "weights.txt").string());
  write_history_csv(history, (dir / "history.csv").string());
  const auto& last = history.epochs.back();
  ordered_json summary;
  summary["variant"] = variant_name(spec.variant);
  summary["parameters"] = model.count_params();
  summary["epochs"] = history.epochs.size();
  summary["train_loss"] = last.train_loss;
  summary["train_accuracy"] = last.train_accuracy;
  summary["val_loss"] = last.val_loss;
  summary["val_accuracy"] = last.val_accuracy;
  write_file(dir / "train_summary.json", dump(summary));
  out << "outputs in " << dir.string() << "\n";
  return kExitOk;
}

void check_compatible(const Model& m, const Dataset& ds) {
  if (ds.n_features() != m.spec().steps) {
    throw ShapeError("weights expect " + std::to_string(m.spec().steps) + " features, dataset has " +
                     std::to_string(ds.n_features()));
  }
  if (ds.n_classes() > m.spec().n_classes) {
    throw ShapeError("weights have " + std::to_string(m.spec().n_classes) + " classes, dataset has " +
                     std::to_string(ds.n_classes()));
  }
}

int cmd_evaluate(RunConfig cfg, std::ostream& out) {
  if (cfg.weights.empty()) throw ConfigError("weights: no weights file given (--weights)");
  if (cfg.prepared_dir.empty()) throw ConfigError("prepared_dir: evaluation needs --prepared <dir>");
  const fs::path dir = run_directory(cfg, "evaluate");
  write_file(dir / "config.json", dump(to_json(cfg)));
  const Model model = load_model(cfg.weights);
  const Dataset val = load_dataset((fs::path(cfg.prepared_dir) / "val.csv").string());
  check_compatible(model, val);
  const EvalReport report = evaluate(model, val);
  write_eval_files(report, dir);
  out << format_report(report);
  if (cfg.latency_reps > 0) {
    const auto lat = latency_benchmark(model, val.to_sequences(), cfg.latency_warmup, cfg.latency_reps);
    write_file(dir / "latency.json", dump(to_json(lat)));
    out << "latency " << lat.mean_seconds << " s/instance\n";
  }
  out << "outputs in " << dir.string() << "\n";
  return kExitOk;
}

std::string variant_model_name(const ModelSpec& s) {
  const std::string lstm = "BiLSTM" + std::to_string(s.hidden);
  switch (s.variant) {
    case Variant::seq_vit_then_bilstm: return "SE-ViT -> " + lstm;
    case Variant::seq_bilstm_then_vit: return lstm + " -> SE-ViT";
    default: return "SE-ViT || " + lstm;
  }
}

std::string variant_description(Variant v) {
  switch (v) {
    case Variant::seq_vit_then_bilstm: return "SE-ViT token sequence is the BiLSTM input";
    case Variant::seq_bilstm_then_vit: return "BiLSTM output sequence is the SE-ViT input";
    default: return "SE-ViT and BiLSTM branches on the input, outputs concatenated";
  }
}

int cmd_ablate(RunConfig cfg, std::ostream& out) {
  const fs::path dir = run_directory(cfg, "ablate");
  write_file(dir / "config.json", dump(to_json(cfg)));
  const Splits data = obtain_splits(cfg, dir, out);
  const std::string dataset_name = cfg.dataset_name.empty() ? "dataset" : cfg.dataset_name;

  std::ostringstream table_csv;
  table_csv << "label,model,description,dataset,parameters,accuracy,loss,fpr\n";
  std::ostringstream table_txt;
  char buf[320];
  std::snprintf(buf, sizeof buf, "%-4s %-22s %-10s %12s %10s %10s %10s\n", "#", "Model", "Dataset", "Params",
                "Acc (%)", "Loss", "FPR (%)");
  table_txt << buf;
  for (int v = 1; v <= 4; ++v) {
    const auto variant = static_cast<Variant>(v);
    RunConfig vc = cfg;
    vc.hidden = 0;  // each row uses its own BiLSTM width
    const ModelSpec spec = model_spec(vc, variant, data.train);
    Model model = build_model(spec, cfg.seed);
    out << "ablate: training " << variant_label(variant) << " " << variant_model_name(spec) << "\n";
    const auto history = train(model, data.train, data.val, train_config(cfg));
    write_history_csv(history, (dir / ("history_" + std::to_string(v) + ".csv")).string());
    const EvalReport r = evaluate(model, data.val);
    table_csv << variant_label(variant) << ',' << csv::escape(variant_model_name(spec)) << ','
              << csv::escape(variant_description(variant)) << ',' << csv::escape(dataset_name) << ','
              << model.count_params() << ',' << g17(r.report.accuracy) << ',' << g17(r.loss) << ','
              << g17(r.report.macro_fpr) << '\n';
    std::snprintf(buf, sizeof buf, "%-4s %-22s %-10s %12lld %10.2f %10.4f %10.4f\n", variant_label(variant).c_str(),
                  variant_model_name(spec).c_str(), dataset_name.c_str(),
                  static_cast<long long>(model.count_params()), 100.0 * r.report.accuracy, r.loss,
                  100.0 * r.report.macro_fpr);
    table_txt << buf;
  }
  write_file(dir / "ablation.csv", table_csv.str());
  write_file(dir / "ablation.txt", table_txt.str());
  out << table_txt.str() << "outputs in " << dir.string() << "\n";
  return kExitOk;
}

int cmd_benchmark(RunConfig cfg, std::ostream& out) {
  const fs::path dir = run_directory(cfg, "benchmark");
  write_file(dir / "config.json", dump(to_json(cfg)));
  std::optional<Dataset> val;
  if (!cfg.prepared_dir.empty()) val = load_dataset((fs::path(cfg.prepared_dir) / "val.csv").string());
  std::optional<Model> model;
  if (!cfg.weights.empty()) {
    model = load_model(cfg.weights);
  } else {
    ModelSpec s = ModelSpec::for_variant(cfg.variant, cfg.steps > 0 ? cfg.steps : (val ? val->n_features() : 60),
                                         cfg.n_classes > 0 ? cfg.n_classes : 6);
    s.embed = cfg.embed;
    s.se_ratio = cfg.se_ratio;
    if (cfg.hidden > 0) s.hidden = cfg.hidden;
    model = build_model(s, cfg.seed);
  }
  Tensor3d inputs;
  if (val) {
    check_compatible(*model, *val);
    inputs = val->to_sequences(0, std::min<Index>(val->size(), 1024));
  } else {
    Rng rng(cfg.seed);
    inputs = Tensor3d(64, model->spec().steps, 1);
    for (Index i = 0; i < inputs.size(); ++i) inputs.tokens().data()[i] = rng.uniform();
  }
  const auto lat = latency_benchmark(*model, inputs, cfg.latency_warmup, std::max(1, cfg.latency_reps));
  ordered_json j = to_json(lat);
  j["variant"] = variant_name(model->spec().variant);
  j["parameters"] = model->count_params();
  write_file(dir / "latency.json", dump(j));
  out << "benchmark: " << variant_label(model->spec().variant) << " mean " << lat.mean_seconds
      << " s/instance over " << lat.instances << " forwards\n";
  return kExitOk;
}

struct Overrides {
  std::string config, dataset, schema, prepared, weights, out, balance, balance_order, variant, dataset_name;
  std::uint64_t seed = 0;
  int epochs = 0;
  Index batch_size = 0;
  double lr = 0.0;
  int reps = 0;
};

void add_common_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "run configuration JSON");
  cmd->add_option("--seed", o.seed, "random seed for every stage");
  cmd->add_option("--out", o.out, "output run directory");
  cmd->add_option("--data", o.dataset, "raw CSV file");
  cmd->add_option("--schema", o.schema, "schema JSON for the raw CSV");
  cmd->add_option("--prepared", o.prepared, "directory with train.csv and val.csv from preprocess");
  cmd->add_option("--weights", o.weights, "weights file");
  cmd->add_option("--balance", o.balance, "none|smote|random");
  cmd->add_option("--balance-order", o.balance_order, "before_split|train_only");
  cmd->add_option("--variant", o.variant, "model variant 1-4");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--batch-size", o.batch_size, "mini-batch size");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--reps", o.reps, "timed forwards for latency measurement");
  cmd->add_option("--dataset-name", o.dataset_name, "dataset label used in tables");
}

RunConfig resolve_config(const CLI::App* cmd, const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : parse_run_config(read_file(o.config));
  auto given = [&](const char* name) { return cmd->get_option(name)->count() > 0; };
  if (given("--seed")) c.seed = o.seed;
  if (given("--out")) c.out = o.out;
  if (given("--data")) c.dataset = o.dataset;
  if (given("--schema")) c.schema = o.schema;
  if (given("--prepared")) c.prepared_dir = o.prepared;
  if (given("--weights")) c.weights = o.weights;
  if (given("--balance")) c.balance = parse_balance(o.balance);
  if (given("--balance-order")) c.balance_order = parse_balance_order(o.balance_order);
  if (given("--variant")) c.variant = parse_variant(o.variant);
  if (given("--epochs")) c.train.epochs = o.epochs;
  if (given("--batch-size")) c.train.batch_size = o.batch_size;
  if (given("--lr")) c.train.learning_rate = o.lr;
  if (given("--reps")) c.latency_reps = o.reps;
  if (given("--dataset-name")) c.dataset_name = o.dataset_name;
  c.train.validate();
  return c;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SE-ViT / BiLSTM intrusion-detection pipeline"};
  app.require_subcommand(1);
  Overrides o;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(RunConfig, std::ostream&);
    CLI::App* app = nullptr;
  };
  std::vector<Command> commands{
      {"synth", "write a synthetic Gaussian-blob flow CSV and its schema", cmd_synth},
      {"preprocess", "encode, scale, balance and split a raw CSV", cmd_preprocess},
      {"train", "train one model variant", cmd_train},
      {"evaluate", "evaluate weights on the validation split", cmd_evaluate},
      {"ablate", "train and compare all four variants", cmd_ablate},
      {"benchmark", "measure single-instance inference latency", cmd_benchmark},
  };
  for (auto& c : commands) {
    c.app = app.add_subcommand(c.name, c.help);
    add_common_options(c.app, o);
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const auto& c : commands) {
      if (c.app->parsed()) return c.run(resolve_config(c.app, o), out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitShape;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace sevit
