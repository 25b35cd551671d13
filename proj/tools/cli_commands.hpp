#ifndef HELIOX_TOOLS_CLI_COMMANDS_HPP
#define HELIOX_TOOLS_CLI_COMMANDS_HPP

// Command implementations behind the `heliox` executable.
//
// Exit codes:
//   0  success
//   1  unexpected internal failure
//   2  configuration error (bad flag, bad config file, invalid synth config, no data for a plan)
//   3  I/O or input format error (unreadable/unwritable path, malformed CSV, bad model file)
//   4  training diverged (non-finite loss)
//   5  model does not match the run (input combo, layout or plan id)
//   6  reports passed to `compare` do not share the same (AOI, step) grid

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include "json.hpp"
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "heliox/heliox.hpp"

namespace heliox::cli {

namespace fs = std::filesystem;

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kIo = 3,
  kDiverged = 4,
  kMismatch = 5,
  kGridMismatch = 6,
};

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
      return kDiverged;
    case ErrorCode::ComboMismatch:
    case ErrorCode::LayoutMismatch:
      return kMismatch;
    case ErrorCode::IoFailure:
    case ErrorCode::MalformedRow:
    case ErrorCode::DuplicateId:
    case ErrorCode::CoordinateOutOfRange:
    case ErrorCode::UnknownAoi:
    case ErrorCode::DuplicateTimestamp:
    case ErrorCode::MisalignedTimestamp:
    case ErrorCode::NegativeInput:
    case ErrorCode::BadMagic:
    case ErrorCode::VersionUnsupported:
    case ErrorCode::Truncated:
    case ErrorCode::CorruptModel:
      return kIo;
    default:
      return kConfig;
  }
}

/// Everything a command needs. Built from defaults, then the config file,
/// then command-line flags.
struct RunConfig {
  fs::path data_dir = "data";
  fs::path out_dir = "out";
  std::optional<fs::path> models_dir;  // evaluate: where the .hxm files live; defaults to out_dir
  synth::SynthConfig synth;
  SchemeConfig scheme;
  learners::LearnerConfig learner;
  InputCombo combo = InputCombo::All;
  Instant split = kDefaultSplitInstant;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool persistence = false;  // evaluate: score the clear-sky persistence baseline instead of models

  [[nodiscard]] fs::path models() const { return models_dir.value_or(out_dir); }
};

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline Instant parse_instant_or_throw(const std::string& text) {
  auto t = parse_iso8601(text);
  if (!t) throw Error(ErrorCode::InvalidConfig, "bad timestamp '" + text + "'");
  return *t;
}

/// Applies a JSON config document. Relative paths resolve against `base`.
inline void merge_config(RunConfig& c, const nlohmann::json& j, const fs::path& base = {}) {
  auto path = [&](const nlohmann::json& v) {
    fs::path p = v.get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  try {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config root must be an object");
    if (j.contains("data")) c.data_dir = path(j["data"]);
    if (j.contains("out")) c.out_dir = path(j["out"]);
    if (j.contains("models")) c.models_dir = path(j["models"]);
    if (j.contains("synth")) synth::merge_json(c.synth, j["synth"]);
    if (j.contains("scheme")) c.scheme.kind = parse_scheme(lower(j["scheme"].get<std::string>()));
    if (j.contains("folds")) c.scheme.folds = j["folds"].get<int>();
    if (j.contains("min_donor_km")) c.scheme.min_donor_km = j["min_donor_km"].get<double>();
    if (j.contains("learner")) c.learner.kind = learners::parse_learner(lower(j["learner"].get<std::string>()));
    if (j.contains("combo")) c.combo = parse_combo(lower(j["combo"].get<std::string>()));
    if (j.contains("split")) c.split = parse_instant_or_throw(j["split"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    if (j.contains("persistence")) c.persistence = j["persistence"].get<bool>();
    if (j.contains("train")) {
      const auto& t = j["train"];
      auto& tc = c.learner.train;
      if (t.contains("epochs")) tc.epochs = t["epochs"].get<int>();
      if (t.contains("batch_size")) tc.batch_size = t["batch_size"].get<int>();
      if (t.contains("learning_rate")) tc.learning_rate = t["learning_rate"].get<double>();
      if (t.contains("shuffle")) tc.shuffle = t["shuffle"].get<bool>();
    }
    if (j.contains("mlp") && j["mlp"].contains("hidden")) c.learner.mlp.hidden = j["mlp"]["hidden"].get<std::vector<int>>();
    if (j.contains("lstm")) {
      const auto& l = j["lstm"];
      if (l.contains("encoder")) c.learner.lstm.encoder = l["encoder"].get<std::vector<int>>();
      if (l.contains("hidden")) c.learner.lstm.hidden = l["hidden"].get<int>();
      if (l.contains("decoder")) c.learner.lstm.decoder = l["decoder"].get<std::vector<int>>();
    }
    if (j.contains("forest")) {
      const auto& f = j["forest"];
      auto& fp = c.learner.forest;
      if (f.contains("trees")) fp.trees = f["trees"].get<int>();
      if (f.contains("min_leaf")) fp.min_leaf = f["min_leaf"].get<int>();
      if (f.contains("max_depth")) fp.max_depth = f["max_depth"].get<int>();
      if (f.contains("max_features")) fp.max_features = f["max_features"].get<int>();
      if (f.contains("bootstrap")) fp.bootstrap = f["bootstrap"].get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

inline void load_config_file(RunConfig& c, const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read config " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, file.string() + ": " + e.what());
  }
  merge_config(c, j, file.parent_path());
}

inline void validate(const RunConfig& c) {
  if (c.jobs < 1) throw Error(ErrorCode::InvalidConfig, "--jobs must be >= 1");
  if (c.scheme.folds < 2 && (c.scheme.kind == SchemeKind::CV || c.scheme.kind == SchemeKind::KN))
    throw Error(ErrorCode::InvalidConfig, "folds must be >= 2");
  if (!(c.scheme.min_donor_km >= 0.0)) throw Error(ErrorCode::InvalidConfig, "min_donor_km must be >= 0");
  c.learner.train.validate();
  const auto& f = c.learner.forest;
  if (f.trees < 1 || f.min_leaf < 1 || f.max_depth < 0 || f.max_features < 0)
    throw Error(ErrorCode::InvalidConfig, "forest parameters");
  auto positive = [](const std::vector<int>& v) { return std::all_of(v.begin(), v.end(), [](int w) { return w > 0; }); };
  if (!positive(c.learner.mlp.hidden) || !positive(c.learner.lstm.encoder) || !positive(c.learner.lstm.decoder) ||
      c.learner.lstm.hidden < 1)
    throw Error(ErrorCode::InvalidConfig, "layer widths must be positive");
}

// ---------------------------------------------------------------------------
// Logging

inline void setup_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("heliox");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_level(spdlog::level::info);
    return true;
  }();
  (void)once;
  if (const char* env = std::getenv("HELIOX_LOG"); env != nullptr && *env != '\0') {
    const auto level = spdlog::level::from_str(lower(env));
    // from_str maps unknown names to off; only "off" itself should silence.
    if (level != spdlog::level::off || lower(env) == "off") spdlog::set_level(level);
  }
}

// ---------------------------------------------------------------------------
// Helpers

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + p.string());
  f << text;
  if (!f) throw Error(ErrorCode::IoFailure, "write failed " + p.string());
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot read " + p.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw Error(ErrorCode::IoFailure, "cannot create " + p.string());
}

inline SeriesStore load_store(const fs::path& data_dir) {
  const auto sites = load_registry((data_dir / "sites.csv").string());
  return clean_irradiance(load_observations((data_dir / "observations.csv").string(), sites));
}

inline fs::path model_path(const fs::path& dir, const std::string& plan_id) { return dir / (plan_id + ".hxm"); }

/// Per-plan seeds depend only on the run seed and the plan's position, so
/// output does not depend on --jobs.
inline learners::LearnerConfig plan_learner_config(const RunConfig& c, std::size_t plan_index) {
  auto cfg = c.learner;
  cfg.train.init_seed = mix_seed(c.seed, 2 * plan_index);
  cfg.train.shuffle_seed = mix_seed(c.seed, 2 * plan_index + 1);
  cfg.forest.seed = cfg.train.init_seed;
  return cfg;
}

/// Runs fn(i) for i in [0, n) on at most `jobs` threads. The first failure in
/// index order is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_gen_data(const RunConfig& c, std::ostream& out = std::cout) {
  c.synth.validate();
  const auto m = synth::emit_dataset(c.synth, c.out_dir);
  spdlog::info("wrote {} AOIs to {}", c.synth.n_aois, c.out_dir.string());
  out << m.manifest_json.string() << '\n';
  return kOk;
}

inline nlohmann::json run_json(const RunConfig& c) {
  nlohmann::json r;
  r["learner"] = std::string(to_string(c.learner.kind));
  r["combo"] = std::string(to_string(c.combo));
  r["seed"] = c.seed;
  r["split"] = format_iso8601(c.split);
  return r;
}

inline int cmd_train(const RunConfig& c, std::ostream& out = std::cout) {
  validate(c);
  auto scheme = c.scheme;
  scheme.seed = c.seed;
  const SeriesStore store = load_store(c.data_dir);
  const auto split = split_train_test(store, c.split);
  if (split.train_empty) throw Error(ErrorCode::InsufficientData, "no rows before the split instant");
  const auto plans = plan(scheme, store.registry());
  ensure_dir(c.out_dir);

  auto doc = plans_to_json(plans, scheme);
  doc["run"] = run_json(c);
  if (scheme.kind == SchemeKind::CV || scheme.kind == SchemeKind::KN)
    doc["fold_map"] = assign_folds(store.registry(), scheme.folds, scheme.seed);
  write_text(c.out_dir / "plans.json", doc.dump(2) + "\n");

  spdlog::info("training {} {} plan(s), learner {}, combo {}, {} job(s)", plans.size(), to_string(scheme.kind),
               to_string(c.learner.kind), to_string(c.combo), c.jobs);
  parallel_for(plans.size(), c.jobs, [&](std::size_t i) {
    const auto& p = plans[i];
    learners::TrainHistory history;
    auto model = train_plan(split.train, p, c.combo, plan_learner_config(c, i), scheme.kind, &history);
    learners::save_model(model, model_path(c.out_dir, p.id).string());
    if (history.epoch_loss.empty())
      spdlog::info("plan {} done", p.id);
    else
      spdlog::info("plan {} done, final epoch loss {:.6f}", p.id, history.epoch_loss.back());
  });
  for (const auto& p : plans) out << model_path(c.out_dir, p.id).string() << '\n';
  return kOk;
}

inline void write_reports(const fs::path& dir, std::span<const EvalRecord> records) {
  std::ostringstream rec, rep, jsonl, grid;
  write_records_csv(rec, records);
  const auto by_step = aggregate(records, {GroupKey::Step});
  write_report_csv(rep, by_step);
  write_report_jsonl(jsonl, by_step);
  write_report_csv(grid, aggregate(records, {GroupKey::Aoi, GroupKey::Step}));
  write_text(dir / "records.csv", rec.str());
  write_text(dir / "report.csv", rep.str());
  write_text(dir / "report.jsonl", jsonl.str());
  write_text(dir / "report_aoi_step.csv", grid.str());
}

inline int cmd_evaluate(const RunConfig& c, std::ostream& out = std::cout) {
  validate(c);
  const SeriesStore store = load_store(c.data_dir);
  const auto split = split_train_test(store, c.split);
  if (split.test_empty) throw Error(ErrorCode::InsufficientData, "no rows after the split instant");
  ensure_dir(c.out_dir);

  EvalOutcome total;
  nlohmann::json per_plan = nlohmann::json::array();
  if (c.persistence) {
    std::vector<std::string> ids;
    for (const auto& s : store.registry()) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    total = evaluate_persistence(split.test, ids);
  } else {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_text(c.models() / "plans.json"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRow, std::string("plans.json: ") + e.what());
    }
    const auto plans = plans_from_json(doc);
    std::vector<EvalOutcome> outcomes(plans.size());
    parallel_for(plans.size(), c.jobs, [&](std::size_t i) {
      const auto& p = plans[i];
      const auto model = learners::load_model(model_path(c.models(), p.id).string());
      if (model.meta.combo != c.combo)
        throw Error(ErrorCode::ComboMismatch, "model " + p.id + " was trained on combo " +
                                                  std::string(to_string(model.meta.combo)) + ", run expects " +
                                                  std::string(to_string(c.combo)));
      if (model.meta.plan_id != p.id)
        throw Error(ErrorCode::ComboMismatch, "model file for " + p.id + " carries plan id " + model.meta.plan_id);
      outcomes[i] = evaluate_plan(model, p, split.test, std::string(to_string(model.kind())));
    });
    for (std::size_t i = 0; i < plans.size(); ++i) {
      per_plan.push_back({{"plan", plans[i].id},
                          {"windows", outcomes[i].windows},
                          {"skipped_gap", outcomes[i].skipped_gap},
                          {"skipped_donor", outcomes[i].skipped_donor}});
      merge(total, std::move(outcomes[i]));
    }
  }
  if (total.records.empty()) throw Error(ErrorCode::EmptyAfterMask, "no daytime records to score");

  write_reports(c.out_dir, total.records);
  nlohmann::json summary;
  summary["windows"] = total.windows;
  summary["records"] = total.records.size();
  summary["skipped_gap"] = total.skipped_gap;
  summary["skipped_donor"] = total.skipped_donor;
  summary["plans"] = per_plan;
  write_text(c.out_dir / "summary.json", summary.dump(2) + "\n");
  spdlog::info("{} windows, {} daytime records, skipped {} (gaps) + {} (donor gaps)", total.windows,
               total.records.size(), total.skipped_gap, total.skipped_donor);
  out << (c.out_dir / "report.csv").string() << '\n';
  return kOk;
}

/// Thrown by compare when two reports cover different (AOI, step) cells.
struct GridMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CompareOptions {
  std::vector<fs::path> reports;  // report_aoi_step.csv files, or the directories holding them
  std::vector<std::string> labels;
  std::string metric = "nrmse";
  double alpha = 0.1;
  fs::path out_dir = "out";
};

inline int cmd_compare(const CompareOptions& o, std::ostream& out = std::cout) {
  if (o.reports.size() < 2) throw Error(ErrorCode::InvalidConfig, "compare needs at least two reports");
  if (!o.labels.empty() && o.labels.size() != o.reports.size())
    throw Error(ErrorCode::InvalidConfig, "one --label per report");
  if (o.metric != "nrmse" && o.metric != "skill_s") throw Error(ErrorCode::InvalidConfig, "metric nrmse|skill_s");

  // step -> aoi -> value, per method
  std::vector<std::map<int, std::map<std::string, double>>> tables;
  std::vector<std::string> methods;
  for (std::size_t m = 0; m < o.reports.size(); ++m) {
    fs::path file = o.reports[m];
    if (fs::is_directory(file)) file /= "report_aoi_step.csv";
    std::istringstream in(read_text(file));
    const auto report = read_report_csv(in);
    const auto& g = report.group_by;
    const auto ai = std::find(g.begin(), g.end(), GroupKey::Aoi);
    const auto si = std::find(g.begin(), g.end(), GroupKey::Step);
    if (ai == g.end() || si == g.end())
      throw Error(ErrorCode::MalformedRow, file.string() + " is not grouped by aoi and step");
    std::map<int, std::map<std::string, double>> t;
    for (const auto& cell : report.cells) {
      if (cell.metric != o.metric) continue;
      const int step = std::stoi(cell.keys[static_cast<std::size_t>(si - g.begin())]);
      t[step][cell.keys[static_cast<std::size_t>(ai - g.begin())]] = cell.mean;
    }
    tables.push_back(std::move(t));
    methods.push_back(!o.labels.empty()                           ? o.labels[m]
                      : file.filename() == "report_aoi_step.csv" ? file.parent_path().filename().string()
                                                                  : file.stem().string());
  }
  if (std::set<std::string>(methods.begin(), methods.end()).size() != methods.size())
    throw Error(ErrorCode::InvalidConfig, "method labels must be distinct; pass --label");

  auto grid = [](const std::map<int, std::map<std::string, double>>& t) {
    std::set<std::pair<int, std::string>> cells;
    for (const auto& [step, by_aoi] : t)
      for (const auto& [aoi, v] : by_aoi) cells.emplace(step, aoi);
    return cells;
  };
  const auto reference = grid(tables[0]);
  for (std::size_t m = 1; m < tables.size(); ++m)
    if (grid(tables[m]) != reference)
      throw GridMismatch("report for " + methods[m] + " covers a different (AOI, step) grid than " + methods[0]);

  ensure_dir(o.out_dir);
  std::ostringstream csv_text;
  nlohmann::json summary = nlohmann::json::array();
  bool header = true;
  for (const auto& [step, by_aoi] : tables[0]) {
    stats::ScoreMatrix sm;
    sm.methods = methods;
    sm.lower_is_better = o.metric == "nrmse";
    for (const auto& [aoi, v] : by_aoi) {
      sm.problems.push_back(aoi);
      std::vector<double> row;
      for (const auto& t : tables) row.push_back(t.at(step).at(aoi));
      sm.values.push_back(std::move(row));
    }
    if (sm.problems.size() < 2) {
      spdlog::warn("step {}: fewer than two AOIs, skipped", step);
      continue;
    }
    stats::RankingTable table;
    try {
      table = stats::compare_methods(sm, o.alpha);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateMatrix) throw;
      // Every method scores identically on every AOI: all tied, nothing to reject.
      const double mid = (static_cast<double>(sm.problems.size() * methods.size()) + 1.0) / 2.0;
      table.friedman.avg_ranks.assign(methods.size(), mid);
      for (std::size_t m = 0; m < methods.size(); ++m)
        table.rows.push_back({methods[m], mid, m == 0 ? std::nullopt : std::optional<double>(1.0), false});
    }
    stats::write_rankings_csv(csv_text, table, std::to_string(step), header);
    header = false;
    summary.push_back({{"step", step},
                       {"friedman_statistic", table.friedman.statistic},
                       {"friedman_p", table.friedman.p},
                       {"control", table.rows.front().method}});
  }
  if (header) throw Error(ErrorCode::InsufficientData, "no step with at least two AOIs");
  write_text(o.out_dir / "rankings.csv", csv_text.str());
  write_text(o.out_dir / "rankings.json", summary.dump(2) + "\n");
  out << csv_text.str();
  return kOk;
}

struct ReportOptions {
  std::vector<fs::path> records;  // records.csv files, or directories holding them
  std::vector<std::string> group_by{"step"};
  fs::path out_dir = "out";
};

inline int cmd_report(const ReportOptions& o, std::ostream& out = std::cout) {
  if (o.records.empty()) throw Error(ErrorCode::InvalidConfig, "report needs at least one records file");
  std::vector<GroupKey> keys;
  for (const auto& g : o.group_by) keys.push_back(parse_group_key(lower(g)));
  std::vector<EvalRecord> all;
  for (auto file : o.records) {
    if (fs::is_directory(file)) file /= "records.csv";
    std::istringstream in(read_text(file));
    auto recs = read_records_csv(in);
    all.insert(all.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  const auto report = aggregate(all, keys);
  ensure_dir(o.out_dir);
  std::ostringstream csv_text, jsonl;
  write_report_csv(csv_text, report);
  write_report_jsonl(jsonl, report);
  write_text(o.out_dir / "report.csv", csv_text.str());
  write_text(o.out_dir / "report.jsonl", jsonl.str());
  out << csv_text.str();
  return kOk;
}

// ---------------------------------------------------------------------------
// Argument parsing

/// Parses argv and runs one command. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  setup_logging();
  CLI::App app{"heliox: multi-site solar irradiance forecasting experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "heliox 1.0");

  std::optional<std::string> config_file, out_dir, data_dir, models_dir, scheme, learner, combo, split;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs, folds, epochs, batch;
  std::optional<double> min_donor, lr;
  std::optional<int> n_aois;
  bool persistence = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "JSON config file");
    sub->add_option("--seed", seed, "run seed");
    sub->add_option("--jobs", jobs, "worker threads (1 = sequential)");
    sub->add_option("--out", out_dir, "output directory");
  };
  auto run_flags = [&](CLI::App* sub) {
    sub->add_option("--data", data_dir, "directory holding sites.csv and observations.csv");
    sub->add_option("--scheme", scheme, "local | global | cv | kn");
    sub->add_option("--learner", learner, "forest | mlp | lstm");
    sub->add_option("--combo", combo, "all | irradiance | static | weather");
    sub->add_option("--split", split, "train/test split instant (ISO 8601, UTC)");
    sub->add_option("--folds", folds, "fold count for cv and kn");
    sub->add_option("--min-donor-km", min_donor, "kn: exclude donors closer than this");
    sub->add_option("--epochs", epochs, "training epochs (mlp, lstm)");
    sub->add_option("--batch-size", batch, "minibatch size (mlp, lstm)");
    sub->add_option("--learning-rate", lr, "Adam step size (mlp, lstm)");
  };

  auto* gen = app.add_subcommand("gen-data", "write a synthetic multi-site dataset");
  common(gen);
  gen->add_option("--n-aois", n_aois, "number of sites");

  auto* train = app.add_subcommand("train", "train one model per plan of the chosen scheme");
  common(train);
  run_flags(train);

  auto* eval = app.add_subcommand("evaluate", "score trained models on the test period");
  common(eval);
  run_flags(eval);
  eval->add_option("--models", models_dir, "directory with plans.json and model files (default: --out)");
  eval->add_flag("--persistence", persistence, "score the persistence baseline instead of models");

  CompareOptions cmp;
  std::optional<std::string> cmp_out;
  auto* compare = app.add_subcommand("compare", "rank methods per step with Friedman aligned ranks and Holm");
  common(compare);
  compare->add_option("reports", cmp.reports, "report_aoi_step.csv files or evaluate output directories")->required();
  compare->add_option("--label", cmp.labels, "method label, one per report");
  compare->add_option("--metric", cmp.metric, "nrmse | skill_s");
  compare->add_option("--alpha", cmp.alpha, "family-wise significance level");

  ReportOptions rep;
  auto* report = app.add_subcommand("report", "aggregate records.csv files");
  common(report);
  report->add_option("records", rep.records, "records.csv files or evaluate output directories")->required();
  report->add_option("--group-by", rep.group_by, "aoi | step | month | scheme | learner | combo")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    RunConfig c;
    if (config_file) load_config_file(c, *config_file);
    if (out_dir) c.out_dir = *out_dir;
    if (data_dir) c.data_dir = *data_dir;
    if (models_dir) c.models_dir = fs::path(*models_dir);
    if (scheme) c.scheme.kind = parse_scheme(lower(*scheme));
    if (learner) c.learner.kind = learners::parse_learner(lower(*learner));
    if (combo) c.combo = parse_combo(lower(*combo));
    if (split) c.split = parse_instant_or_throw(*split);
    if (folds) c.scheme.folds = *folds;
    if (min_donor) c.scheme.min_donor_km = *min_donor;
    if (epochs) c.learner.train.epochs = *epochs;
    if (batch) c.learner.train.batch_size = *batch;
    if (lr) c.learner.train.learning_rate = *lr;
    if (jobs) c.jobs = *jobs;
    if (seed) c.seed = *seed;
    if (persistence) c.persistence = true;

    if (gen->parsed()) {
      if (seed) c.synth.seed = *seed;
      if (n_aois) c.synth.n_aois = *n_aois;
      return cmd_gen_data(c, out);
    }
    if (train->parsed()) return cmd_train(c, out);
    if (eval->parsed()) return cmd_evaluate(c, out);
    if (compare->parsed()) {
      cmp.out_dir = c.out_dir;
      return cmd_compare(cmp, out);
    }
    rep.out_dir = c.out_dir;
    return cmd_report(rep, out);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.code());
  } catch (const GridMismatch& e) {
    spdlog::error("{}", e.what());
    return kGridMismatch;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kInternal;
  }
}

}  // namespace heliox::cli

#endif  // HELIOX_TOOLS_CLI_COMMANDS_HPP
