// SPDX-License-Identifier: Apache-2.0
#include "vdt/commands.hpp"

#include "vdt/active.hpp"
#include "vdt/config.hpp"
#include "vdt/dataio.hpp"
#include "vdt/gradsuite.hpp"
#include "vdt/synth.hpp"
#include "vdt/twinloop.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace vdt {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kCliSplitStream = 0x434C4953ULL;   // "CLIS"
constexpr std::uint64_t kCliPredictStream = 0x434C4950ULL; // "CLIP"

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class Run {
public:
  Run(const std::string &command, const CommandOptions &options, std::ostream &report)
      : report_(report), jobs_(std::max<std::size_t>(1, options.jobs)), start_(Clock::now()) {
    if (!options.config.empty()) cfg_ = Config::load(options.config);
    const std::uint64_t file_seed = cfg_.contains("seed") ? cfg_.get_u64("seed", 0) : 0;
    seed_ = resolve_seed(options.seed, std::getenv("VDT_SEED"), file_seed);
    cfg_.set("seed", std::to_string(seed_));
    cfg_.get_u64("seed", seed_);
    cfg_.set("command", command);
    cfg_.get_string("command", command);
    if (options.out) cfg_.set("out", options.out->string());
    out_ = cfg_.get_string("out", "vdt_out/" + command);
  }

  Config &cfg() noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t jobs() const noexcept { return jobs_; }
  const fs::path &out() const noexcept { return out_; }
  std::ostream &report() noexcept { return report_; }
  double wall() const { return seconds_since(start_); }

  /// Ends the config-reading phase: unknown keys abort before any work.
  void seal() {
    cfg_.reject_unknown();
    fs::create_directories(out_);
    write("config.resolved", cfg_.resolved_text());
  }
  void write(const std::string &name, const std::string &text) { write_text_atomic(out_ / name, text); }
  void write_json(const std::string &name, const json &j) { write(name, j.dump(2) + "\n"); }

private:
  Config cfg_;
  std::ostream &report_;
  std::uint64_t seed_ = 0;
  std::size_t jobs_;
  fs::path out_;
  Clock::time_point start_;
};

// ---- shared config sections --------------------------------------------------------------

TrainConfig preset_train(const std::string &preset) {
  TrainConfig t;
  if (preset == "vrnn_psml") {
    t.epochs = 50;
    t.batch_size = 512;
    t.lr = 1e-3;
    t.clip_norm = 5.0;
  } else if (preset == "vrnn_httf") {
    t.epochs = 50;
    t.batch_size = 256;
    t.lr = 1.8e-4;
    t.clip_norm = 5.0;
  } else if (preset == "vbattnn") {
    t.epochs = 1000;
    t.batch_size = 10;
    t.lr = 2e-2;
    t.weight_decay = 5e-4;
    t.lr_schedule = {{100, 0.5}, {500, 0.5}};
  } else {
    t.epochs = 100;
    t.batch_size = 32;
    t.lr = 1e-3;
    t.weight_decay = 1e-5;
  }
  return t;
}

TrainConfig read_train(Config &c, const std::string &prefix, std::uint64_t seed, TrainConfig t) {
  t.epochs = c.get_size(prefix + "epochs", t.epochs);
  t.batch_size = c.get_size(prefix + "batch_size", t.batch_size);
  t.lr = c.get_double(prefix + "lr", t.lr);
  t.beta = c.get_double(prefix + "beta", t.beta);
  t.prior_sigma = c.get_double(prefix + "prior_sigma", t.prior_sigma);
  t.weight_decay = c.get_double(prefix + "weight_decay", t.weight_decay);
  t.clip_norm = c.get_double(prefix + "clip_norm", t.clip_norm);
  t.shuffle = c.get_bool(prefix + "shuffle", t.shuffle);
  std::vector<std::string> fallback;
  for (const auto &[e, m] : t.lr_schedule) fallback.push_back(std::to_string(e) + ":" + format_double(m));
  t.lr_schedule.clear();
  for (const auto &item : c.get_strings(prefix + "lr_schedule", fallback)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("config key '" + prefix + "lr_schedule': expected epoch:multiplier, got '" + item + "'");
    std::size_t epoch = 0;
    double mult = 0.0;
    const auto a = std::from_chars(item.data(), item.data() + colon, epoch);
    const auto b = std::from_chars(item.data() + colon + 1, item.data() + item.size(), mult);
    if (a.ec != std::errc{} || b.ec != std::errc{} || a.ptr != item.data() + colon ||
        b.ptr != item.data() + item.size())
      throw ConfigError("config key '" + prefix + "lr_schedule': cannot parse '" + item + "'");
    t.lr_schedule.emplace_back(epoch, mult);
  }
  t.seed = seed;
  try {
    t.validate();
  } catch (const std::exception &e) {
    throw ConfigError(prefix + ": " + e.what());
  }
  return t;
}

struct ModelSpec {
  std::string preset;
  double scale = 1.0;
  CellKind cell = CellKind::lstm;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::relu;

  bool sequence() const { return preset == "vrnn_psml" || preset == "vrnn_httf"; }

  ModelFactory factory(std::size_t in, std::size_t out, std::size_t seq_len = 1) const {
    const ModelSpec spec = *this;
    if (preset == "vfnn")
      return [spec, in, out] {
        std::vector<std::size_t> widths{in};
        widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
        return std::unique_ptr<VdtModel>(std::make_unique<VariationalFnn>("vfnn", widths, out, spec.activation));
      };
    return [spec, in, out, seq_len] { return make_preset(spec.preset, in, out, spec.scale, seq_len, spec.cell); };
  }
};

ModelSpec read_model(Config &c, const std::string &fallback, const std::vector<std::string> &allowed,
                     CellKind cell = CellKind::lstm) {
  ModelSpec m;
  m.preset = c.get_string("model.preset", fallback);
  if (std::find(allowed.begin(), allowed.end(), m.preset) == allowed.end()) {
    std::string msg = "unknown preset '" + m.preset + "' for this command (expected";
    for (const auto &a : allowed) msg += " " + a;
    throw ConfigError(msg + ")");
  }
  if (m.preset == "vfnn") {
    m.hidden = c.get_sizes("model.hidden", {32, 32});
    if (m.hidden.empty()) throw ConfigError("config key 'model.hidden' needs at least one width");
    m.activation = parse_activation(c.get_string("model.activation", "relu"));
  } else {
    m.scale = c.get_double("model.scale", 1.0);
    if (!(m.scale > 0.0 && m.scale <= 1.0)) throw ConfigError("config key 'model.scale' must be in (0, 1]");
  }
  if (m.sequence()) m.cell = parse_cell_kind(c.get_string("model.cell", to_string(cell)));
  return m;
}

json metrics_json(const std::vector<std::string> &names, const std::vector<MetricReport> &reports) {
  json j = json::object();
  for (std::size_t i = 0; i < reports.size(); ++i)
    j[i < names.size() ? names[i] : "output_" + std::to_string(i)] = json::parse(to_json(reports[i]));
  return j;
}

std::string loss_csv(const std::vector<double> &epoch_loss) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) out += std::to_string(e + 1) + "," + format_double(epoch_loss[e]) + "\n";
  return out;
}

std::size_t index_of(const std::vector<std::string> &names, const std::string &name, const std::string &what) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DataError(what + ": missing column: " + name);
  return static_cast<std::size_t>(it - names.begin());
}

// ---- data sources ----------------------------------------------------------------------

ChfSpec read_chf(Config &c, std::uint64_t seed) {
  ChfSpec s;
  s.rows = c.get_size("synth.rows", s.rows);
  s.noise = c.get_double("synth.noise", s.noise);
  s.seed = seed;
  return s;
}

SeasonalSpec read_seasonal(Config &c, std::uint64_t seed) {
  SeasonalSpec s;
  s.steps_per_day = c.get_size("synth.steps_per_day", s.steps_per_day);
  s.days = c.get_size("synth.days", 130);
  s.days_per_year = c.get_size("synth.days_per_year", s.days_per_year);
  s.noise = c.get_double("synth.noise", s.noise);
  s.seed = seed;
  return s;
}

SensorFieldSpec read_field(Config &c, std::uint64_t seed) {
  SensorFieldSpec s;
  s.sensors = c.get_size("synth.sensors", s.sensors);
  s.duration = c.get_double("synth.duration", s.duration);
  s.spacing = c.get_double("synth.spacing", s.spacing);
  s.noise = c.get_double("synth.noise", s.noise);
  s.seed = seed;
  return s;
}

CellSpec read_cell(Config &c, std::uint64_t seed, const EcmConstants &ecm) {
  CellSpec s;
  s.discharges = c.get_size("synth.discharges", s.discharges);
  s.steps = c.get_size("synth.steps", s.steps);
  s.dt = c.get_double("synth.dt", s.dt);
  s.capacity_fade = c.get_double("synth.capacity_fade", s.capacity_fade);
  s.resistance_growth = c.get_double("synth.resistance_growth", s.resistance_growth);
  s.noise = c.get_double("synth.noise", s.noise);
  s.ecm = ecm;
  s.seed = seed;
  return s;
}

EcmConstants read_ecm(Config &c) {
  EcmConstants e;
  e.q_max = c.get_double("ecm.q_max", e.q_max);
  e.c_sp = c.get_double("ecm.c_sp", e.c_sp);
  e.r_s = c.get_double("ecm.r_s", e.r_s);
  e.tau_s = c.get_double("ecm.tau_s", e.tau_s);
  e.inv_cs = c.get_double("ecm.inv_cs", e.inv_cs);
  e.v_nominal = c.get_double("ecm.v_nominal", e.v_nominal);
  try {
    e.validate();
  } catch (const std::exception &ex) {
    throw ConfigError(std::string("ecm: ") + ex.what());
  }
  return e;
}

struct TabularSource {
  std::string path;
  ChfSpec spec;
  std::vector<std::string> features, targets;

  static TabularSource read(Config &c, std::uint64_t seed) {
    TabularSource s;
    s.path = c.get_string("data.path", "");
    if (s.path.empty()) {
      s.spec = read_chf(c, seed);
      s.features.assign(kChfColumns.begin(), kChfColumns.end() - 1);
      s.targets = {kChfColumns.back()};
    } else {
      s.features = c.get_strings("data.features", {});
      s.targets = c.get_strings("data.targets", {});
      if (s.features.empty() || s.targets.empty())
        throw ConfigError("data.features and data.targets are required with data.path");
    }
    return s;
  }

  ActiveData load(std::ostream &report) const {
    if (path.empty()) return synth_chf(spec);
    const Table t = load_table(path, {features, targets, Layout::tabular});
    if (t.dropped) report << "dropped " << t.dropped << " incomplete rows\n";
    return {t.features(), t.targets()};
  }
};

struct SeriesSource {
  std::string path;
  SeasonalSpec spec;
  std::vector<std::string> features, targets;

  static SeriesSource read(Config &c, std::uint64_t seed) {
    SeriesSource s;
    s.path = c.get_string("data.path", "");
    if (s.path.empty()) {
      s.spec = read_seasonal(c, seed);
      s.features = c.get_strings("data.features", kSeasonalColumns);
      s.targets = c.get_strings("data.targets", {"solar", "wind"});
    } else {
      s.features = c.get_strings("data.features", {});
      s.targets = c.get_strings("data.targets", {});
    }
    if (s.features.empty() || s.targets.empty()) throw ConfigError("data.features and data.targets must not be empty");
    return s;
  }

  struct Loaded {
    Tensor2 series;
    std::vector<std::size_t> feature_cols, target_cols;
  };

  Loaded load(std::ostream &report) const {
    std::vector<std::string> names = features;
    for (const auto &t : targets)
      if (std::find(names.begin(), names.end(), t) == names.end()) names.push_back(t);
    Loaded out;
    if (path.empty()) {
      const Tensor2 full = synth_seasonal(spec);
      std::vector<std::size_t> cols;
      for (const auto &n : names) cols.push_back(index_of(kSeasonalColumns, n, "seasonal_grid"));
      out.series = full.select_cols(cols);
    } else {
      const Table t = load_table(path, {names, {}, Layout::timeseries});
      if (t.imputed) report << "imputed " << t.imputed << " cells\n";
      out.series = t.data;
    }
    for (const auto &f : features) out.feature_cols.push_back(index_of(names, f, "series"));
    for (const auto &t : targets) out.target_cols.push_back(index_of(names, t, "series"));
    return out;
  }
};

SessionPlan read_plan(Config &c, std::size_t sessions_fallback, bool read_count) {
  SessionPlan p;
  p.seq_len = c.get_size("sessions.seq_len", p.seq_len);
  p.train_window = c.get_size("sessions.train_window", 240);
  p.test_window = c.get_size("sessions.test_window", 24);
  p.sessions = read_count ? c.get_size("sessions.count", sessions_fallback) : sessions_fallback;
  p.stride = read_count ? c.get_size("sessions.stride", 0) : 0;
  return p;
}

json session_json(const SessionLog &l, const std::vector<std::string> &targets) {
  json j;
  j["session"] = l.session;
  j["train_pairs"] = l.train_pairs;
  j["train_s"] = l.train_seconds;
  j["infer_s"] = l.inference_seconds;
  j["checkpoint"] = l.checkpoint.string();
  j["train_rows"] = {l.train_row_min, l.train_row_max};
  j["test_rows"] = {l.test_row_min, l.test_row_max};
  j["warm_start_probe"] = {l.probe_start, l.probe_end};
  j["targets"] = metrics_json(targets, l.metrics);
  return j;
}

// ---- commands ----------------------------------------------------------------------------

int cmd_train(Run &run) {
  Config &c = run.cfg();
  const std::string layout_name = c.get_string("data.layout", "tabular");
  const Layout layout = parse_layout(layout_name);
  if (layout == Layout::tabular) {
    const TabularSource source = TabularSource::read(c, run.seed());
    const ModelSpec model = read_model(c, "vfnn_chf", {"vfnn_chf", "vfnn"});
    const TrainConfig train = read_train(c, "train.", run.seed(), preset_train(model.preset));
    const double test_fraction = c.get_double("split.test_fraction", 0.2);
    const std::size_t samples = c.get_size("samples", 200);
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("split.test_fraction must be in (0, 1)");
    run.seal();

    const ActiveData data = source.load(run.report());
    std::vector<std::size_t> idx(data.x.rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    RngStream split(run.seed(), kCliSplitStream);
    shuffle_indices(idx, split);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    if (n_test == 0 || n_test >= idx.size()) throw DataError("train: too few rows for the requested split");
    std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> fit(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(test.begin(), test.end());
    std::sort(fit.begin(), fit.end());

    const StandardScaler xs = StandardScaler::fit(data.x.select_rows(fit));
    const StandardScaler ys = StandardScaler::fit(data.y.select_rows(fit));
    auto net = model.factory(data.x.cols(), data.y.cols())();
    RngStream init(train.seed, kInitStream);
    net->init(init);
    const FitResult fr =
        train_model(*net, xs.transform(data.x.select_rows(fit)), ys.transform(data.y.select_rows(fit)), train);
    PredictiveSummary s =
        net->predict(xs.transform(data.x.select_rows(test)), samples, RngStream(run.seed(), kCliPredictStream));
    s.mean = ys.inverse(s.mean);
    s.lower = ys.inverse(s.lower);
    s.upper = ys.inverse(s.upper);
    const Tensor2 truth = data.y.select_rows(test);
    const auto reports = evaluate_summary(truth, s);

    std::string pred = "row,target,truth,mean,lower,upper\n";
    for (std::size_t r = 0; r < test.size(); ++r)
      for (std::size_t o = 0; o < truth.cols(); ++o)
        pred += std::to_string(test[r]) + "," + source.targets[o] + "," + format_double(truth(r, o)) + "," +
                format_double(s.mean(r, o)) + "," + format_double(s.lower(r, o)) + "," + format_double(s.upper(r, o)) +
                "\n";
    save_checkpoint(run.out() / "model.vdtc", net->state());
    run.write("predictions.csv", pred);
    run.write("loss.csv", loss_csv(fr.epoch_loss));
    json j;
    j["targets"] = metrics_json(source.targets, reports);
    j["train_rows"] = fit.size();
    j["test_rows"] = test.size();
    j["wall_s"] = run.wall();
    run.write_json("metrics.json", j);
    run.report() << "train: " << source.targets.front() << " r2 " << reports.front().r2 << " coverage "
                 << reports.front().coverage << "\n";
    return 0;
  }

  const SeriesSource source = SeriesSource::read(c, run.seed());
  const ModelSpec model = read_model(c, "vrnn_psml", {"vrnn_psml", "vrnn_httf"});
  const TrainConfig train = read_train(c, "train.", run.seed(), preset_train(model.preset));
  const SessionPlan plan = read_plan(c, 1, false);
  const std::size_t samples = c.get_size("samples", 200);
  run.seal();

  const auto loaded = source.load(run.report());
  SessionConfig sc;
  sc.train = train;
  sc.samples = samples;
  sc.run_dir = run.out() / "checkpoints";
  sc.feature_cols = loaded.feature_cols;
  sc.target_cols = loaded.target_cols;
  const auto logs = run_sessions(loaded.series, plan,
                                 model.factory(loaded.feature_cols.size(), loaded.target_cols.size(), plan.seq_len), sc);
  run.write("loss.csv", loss_csv(logs.front().epoch_loss));
  json j;
  j["targets"] = metrics_json(source.targets, logs.front().metrics);
  j["train_rows"] = logs.front().train_pairs;
  j["test_rows"] = plan.test_window;
  j["wall_s"] = run.wall();
  run.write_json("metrics.json", j);
  run.report() << "train: " << source.targets.front() << " r2 " << logs.front().metrics.front().r2 << "\n";
  return 0;
}

int cmd_sessions(Run &run) {
  Config &c = run.cfg();
  const SeriesSource source = SeriesSource::read(c, run.seed());
  const ModelSpec model = read_model(c, "vrnn_psml", {"vrnn_psml", "vrnn_httf"});
  SessionConfig sc;
  sc.train = read_train(c, "train.", run.seed(), preset_train(model.preset));
  const SessionPlan plan = read_plan(c, 12, true);
  const std::string mode = c.get_string("sessions.mode", "windowed");
  if (mode == "windowed") sc.mode = SessionMode::windowed;
  else if (mode == "cumulative") sc.mode = SessionMode::cumulative;
  else throw ConfigError("sessions.mode must be windowed or cumulative, got '" + mode + "'");
  sc.reset_optimizer = c.get_bool("sessions.reset_optimizer", true);
  sc.fit_noise = c.get_bool("sessions.fit_noise", true);
  sc.samples = c.get_size("samples", 200);
  run.seal();

  const auto loaded = source.load(run.report());
  sc.run_dir = run.out() / "checkpoints";
  sc.feature_cols = loaded.feature_cols;
  sc.target_cols = loaded.target_cols;
  const auto logs = run_sessions(loaded.series, plan,
                                 model.factory(loaded.feature_cols.size(), loaded.target_cols.size(), plan.seq_len), sc);
  run.write("sessions.csv", sessions_csv(logs));
  json all = json::array();
  for (const auto &l : logs) {
    all.push_back(session_json(l, source.targets));
    run.report() << "session " << l.session << ": train " << l.train_seconds << " s, " << source.targets.front()
                 << " r2 " << l.metrics.front().r2 << "\n";
  }
  json j;
  j["mode"] = mode;
  j["sessions"] = all;
  j["wall_s"] = run.wall();
  run.write_json("sessions.json", j);
  json m;
  m["targets"] = metrics_json(source.targets, logs.back().metrics);
  m["session"] = logs.back().session;
  m["wall_s"] = run.wall();
  run.write_json("metrics.json", m);
  return 0;
}

int cmd_active(Run &run) {
  Config &c = run.cfg();
  const TabularSource source = TabularSource::read(c, run.seed());
  const ModelSpec model = read_model(c, "vfnn_chf", {"vfnn_chf", "vfnn"});
  const TrainConfig train = read_train(c, "train.", run.seed(), preset_train(model.preset));
  AalConfig a;
  a.initial_n = c.get_size("aal.initial_n", a.initial_n);
  a.per_iter = c.get_size("aal.per_iter", a.per_iter);
  a.candidate_pool = c.get_size("aal.candidate_pool", a.candidate_pool);
  a.target_r2 = c.get_double("aal.target_r2", a.target_r2);
  a.trials = c.get_size("aal.trials", a.trials);
  a.max_pool = c.get_size("aal.max_pool", a.max_pool);
  a.max_iterations = c.get_size("aal.max_iterations", a.max_iterations);
  a.samples = c.get_size("aal.samples", a.samples);
  a.test_fraction = c.get_double("aal.test_fraction", a.test_fraction);
  a.redraw_candidates = c.get_bool("aal.redraw_candidates", a.redraw_candidates);
  a.seed = run.seed();
  try {
    a.validate();
  } catch (const std::exception &e) {
    throw ConfigError(e.what());
  }
  run.seal();

  const ActiveData data = source.load(run.report());
  const auto trials = run_paired_trials(data, a, model.factory(data.x.cols(), data.y.cols()), train, run.jobs());
  run.write("curves.csv", curves_csv(trials));

  std::string bands = "strategy,size,mean_r2,std_r2\n";
  json summary;
  for (const Strategy s : {Strategy::aal, Strategy::random}) {
    std::vector<LearningCurve> curves;
    std::vector<double> to_target, seconds;
    bool all_reached = true;
    for (const auto &t : trials) {
      const auto &curve = s == Strategy::aal ? t.aal : t.random;
      curves.push_back(curve);
      all_reached = all_reached && curve.reached;
      if (curve.reached) to_target.push_back(static_cast<double>(curve.samples_to_target));
      seconds.push_back(curve.points.back().cum_seconds);
    }
    for (const auto &b : aggregate_trials(curves))
      bands += to_string(s) + "," + std::to_string(b.size) + "," + format_double(b.mean) + "," + format_double(b.std) + "\n";
    json js;
    js["reached_all"] = all_reached;
    js["reached"] = to_target.size();
    js["mean_samples_to_target"] = to_target.empty() ? json(nullptr) : json(mean(to_target));
    js["mean_train_s"] = mean(seconds);
    summary[to_string(s)] = js;
  }
  if (summary["aal"]["mean_samples_to_target"].is_number() && summary["random"]["mean_samples_to_target"].is_number())
    summary["ratio"] = summary["aal"]["mean_samples_to_target"].get<double>() /
                       summary["random"]["mean_samples_to_target"].get<double>();
  summary["trials"] = a.trials;
  summary["target_r2"] = a.target_r2;
  summary["wall_s"] = run.wall();
  run.write("bands.csv", bands);
  run.write_json("summary.json", summary);
  run.report() << "active-learn: aal " << summary["aal"]["mean_samples_to_target"].dump() << " vs random "
               << summary["random"]["mean_samples_to_target"].dump() << " samples to R2 " << a.target_r2 << "\n";
  return 0;
}

int cmd_concat(Run &run) {
  Config &c = run.cfg();
  const std::string path = c.get_string("data.path", "");
  SensorFieldSpec field_spec;
  std::string first_prefix = "TS_", second_prefix = "TF_", time_column = "timestamp";
  if (path.empty()) {
    field_spec = read_field(c, run.seed());
  } else {
    first_prefix = c.get_string("sensors.first_prefix", first_prefix);
    second_prefix = c.get_string("sensors.second_prefix", second_prefix);
    time_column = c.get_string("sensors.time_column", time_column);
  }
  const double interval = c.get_double("concat.interval", 30.0);
  DropoutConfig dc;
  dc.wiring = parse_wiring(c.get_string("concat.wiring", "ordinal"));
  dc.bins = c.get_size("concat.bins", dc.bins);
  dc.seq_len = c.get_size("concat.seq_len", dc.seq_len);
  dc.test_share = c.get_double("concat.test_share", dc.test_share);
  dc.fractions = c.get_doubles("dropout.fractions", dc.fractions);
  dc.samples = c.get_size("samples", dc.samples);
  const ModelSpec model = read_model(c, "vrnn_httf", {"vrnn_httf", "vrnn_psml"}, CellKind::gru);
  dc.train = read_train(c, "train.", run.seed(), preset_train(model.preset));
  dc.seed = run.seed();
  if (dc.fractions.empty()) throw ConfigError("dropout.fractions must list at least one fraction");
  run.seal();

  std::vector<SensorSeries> first, second;
  if (path.empty()) {
    const SensorField field = synth_sensor_field(field_spec);
    first = field.solid;
    second = field.fluid;
  } else {
    const CsvText csv = read_csv(path);
    first = sensor_group(csv, first_prefix, time_column);
    if (dc.wiring == Wiring::joint) second = sensor_group(csv, second_prefix, time_column);
  }
  for (auto *group : {&first, &second})
    for (auto &s : *group) s = downsample(s, interval);

  const auto order = structured_order(first, dc.bins);
  std::vector<double> means;
  for (const auto &s : first) means.push_back(s.mean());
  const auto bins = bin_sensors(means, dc.bins);
  std::vector<std::size_t> bin_of(first.size());
  for (std::size_t b = 0; b < bins.size(); ++b)
    for (std::size_t s : bins[b]) bin_of[s] = b;
  std::string order_csv = "rank,sensor,bin,mean\n";
  for (std::size_t k = 0; k < order.size(); ++k)
    order_csv += std::to_string(k) + "," + first[order[k]].id + "," + std::to_string(bin_of[order[k]]) + "," +
                 format_double(means[order[k]]) + "\n";
  const ConcatSignal signal = build_signal(first, order);
  std::string signal_csv = "index,sensor,position,value\n";
  for (std::size_t seg = 0; seg < signal.order.size(); ++seg) {
    const std::size_t b = signal.boundaries[seg];
    const std::size_t e = seg + 1 < signal.boundaries.size() ? signal.boundaries[seg + 1] : signal.values.size();
    for (std::size_t i = b; i < e; ++i)
      signal_csv += std::to_string(i) + "," + first[signal.order[seg]].id + "," + format_double(signal.position[i]) +
                    "," + format_double(signal.values[i]) + "\n";
  }
  run.write("order.csv", order_csv);
  run.write("signal.csv", signal_csv);

  const std::size_t features = 2, targets = dc.wiring == Wiring::joint ? 2 : 1;
  const auto rows = dropout_sweep(first, second, model.factory(features, targets, dc.seq_len), dc);
  std::string sweep = "fraction,sensors,r2,mae,rmse,mse,mape,coverage,width\n";
  json per = json::array();
  for (const auto &r : rows) {
    const auto &m = r.metrics;
    sweep += format_double(r.fraction) + "," + std::to_string(r.sensors) + "," + format_double(m.r2) + "," +
             format_double(m.mae) + "," + format_double(m.rmse) + "," + format_double(m.mse) + "," +
             format_double(m.mape) + "," + format_double(m.coverage) + "," + format_double(m.width) + "\n";
    json jr = json::parse(to_json(m));
    jr["fraction"] = r.fraction;
    jr["sensors"] = r.sensors;
    per.push_back(jr);
    run.report() << "concat-sensors: " << r.sensors << " sensors, r2 " << m.r2 << ", width " << m.width << "\n";
  }
  run.write("dropout.csv", sweep);
  json j;
  j["wiring"] = to_string(dc.wiring);
  j["sweep"] = per;
  j["wall_s"] = run.wall();
  run.write_json("metrics.json", j);
  return 0;
}

double mean_of(const std::vector<DischargeResult> &r, double MetricReport::*field) {
  double acc = 0.0;
  for (const auto &d : r) acc += d.metrics.*field;
  return r.empty() ? 0.0 : acc / static_cast<double>(r.size());
}

int cmd_battery(Run &run) {
  Config &c = run.cfg();
  const EcmConstants ecm = read_ecm(c);
  const std::string path = c.get_string("data.path", "");
  CellSpec cell;
  if (path.empty()) cell = read_cell(c, run.seed(), ecm);
  const double scale = c.get_double("model.scale", 1.0);
  const double lambda = c.get_double("battery.lambda", 1.0);
  const std::size_t block = c.get_size("battery.block", 10);
  const auto budgets = c.get_sizes("battery.static_budgets", {30, 60, 150});
  const std::size_t samples = c.get_size("samples", 50);
  const TrainConfig train = read_train(c, "train.", run.seed(), preset_train("vbattnn"));
  TrainConfig ft = train;
  ft.epochs = 100;
  ft.lr_schedule.clear();
  ft = read_train(c, "finetune.", run.seed(), ft);
  const std::size_t largest = budgets.empty() ? 0 : *std::max_element(budgets.begin(), budgets.end());
  const std::size_t test_from = c.get_size("battery.test_from", std::max(largest, block));
  run.seal();

  const auto profiles = path.empty() ? synth_degrading_cell(cell) : load_battery(path);
  if (test_from >= profiles.size())
    throw DataError("battery: test_from " + std::to_string(test_from) + " leaves no test discharges out of " +
                    std::to_string(profiles.size()));
  const std::span<const DischargeProfile> all(profiles);
  const auto test = all.subspan(test_from);
  const RngStream predict(run.seed(), kCliPredictStream);

  struct Row {
    std::string procedure;
    std::vector<DischargeResult> results;
    double train_s = 0.0;
  };
  std::vector<Row> table;
  for (std::size_t n : budgets) {
    if (n == 0 || n > test_from) throw DataError("battery: static budget " + std::to_string(n) + " overlaps the test range");
    BattNN model(ecm, scale);
    model.set_lambda(lambda);
    RngStream init(run.seed(), kInitStream);
    model.init(init);
    const FitResult fr = train_battnn(model, all.subspan(0, n), train);
    save_checkpoint(run.out() / ("static_" + std::to_string(n) + ".vdtc"), model.state());
    auto res = evaluate_profiles(model, test, samples, predict);
    for (std::size_t k = 0; k < res.size(); ++k) res[k].position = test_from + k;
    table.push_back({"static_" + std::to_string(n), std::move(res), fr.wall_seconds});
  }
  {
    BattNN model(ecm, scale);
    model.set_lambda(lambda);
    RngStream init(run.seed(), kInitStream);
    model.init(init);
    RollingConfig rc;
    rc.block = block;
    rc.initial = train;
    rc.finetune = ft;
    rc.samples = samples;
    rc.seed = run.seed();
    rc.run_dir = run.out() / "checkpoints";
    const auto rolled = rolling_update(all, model, rc);
    Row row{"rolling", {}, 0.0};
    for (const auto &d : rolled.discharges)
      if (d.position >= test_from) row.results.push_back(d);
    for (double s : rolled.block_train_seconds) row.train_s += s;
    table.push_back(std::move(row));
  }

  std::string per = "procedure,discharge_id,position,mse,rmse,mape,coverage,width\n";
  std::string summary = "procedure,mse,rmse,mape,coverage,width,train_s\n";
  json j;
  for (const auto &row : table) {
    for (const auto &d : row.results)
      per += row.procedure + "," + std::to_string(d.id) + "," + std::to_string(d.position) + "," +
             format_double(d.metrics.mse) + "," + format_double(d.metrics.rmse) + "," + format_double(d.metrics.mape) +
             "," + format_double(d.metrics.coverage) + "," + format_double(d.metrics.width) + "\n";
    const double mse = mean_of(row.results, &MetricReport::mse), rmse = mean_of(row.results, &MetricReport::rmse),
                 mape = mean_of(row.results, &MetricReport::mape), cov = mean_of(row.results, &MetricReport::coverage),
                 width = mean_of(row.results, &MetricReport::width);
    summary += row.procedure + "," + format_double(mse) + "," + format_double(rmse) + "," + format_double(mape) + "," +
               format_double(cov) + "," + format_double(width) + "," + format_double(row.train_s) + "\n";
    j["procedures"][row.procedure] = {{"mse", mse}, {"rmse", rmse}, {"mape", mape}, {"coverage", cov},
                                      {"width", width}, {"train_s", row.train_s}};
    run.report() << "battery: " << row.procedure << " mse " << mse << "\n";
  }
  j["test_from"] = test_from;
  j["test_discharges"] = test.size();
  j["wall_s"] = run.wall();
  run.write("discharges.csv", per);
  run.write("summary.csv", summary);
  run.write_json("metrics.json", j);
  return 0;
}

int cmd_synth(Run &run) {
  Config &c = run.cfg();
  const SynthKind kind = parse_synth_kind(c.require_string("synth.kind"));
  const std::string file = to_string(kind) + ".csv";
  switch (kind) {
  case SynthKind::chf_like: {
    const ChfSpec spec = read_chf(c, run.seed());
    run.seal();
    const ActiveData d = synth_chf(spec);
    Tensor2 table(d.x.rows(), 6);
    for (std::size_t r = 0; r < d.x.rows(); ++r) {
      for (std::size_t j = 0; j < 5; ++j) table(r, j) = d.x(r, j);
      table(r, 5) = d.y(r, 0);
    }
    run.write(file, to_csv(kChfColumns, table));
    break;
  }
  case SynthKind::seasonal_grid: {
    const SeasonalSpec spec = read_seasonal(c, run.seed());
    run.seal();
    const Tensor2 s = synth_seasonal(spec);
    Tensor2 table(s.rows(), 5);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      table(r, 0) = static_cast<double>(r);
      for (std::size_t j = 0; j < 4; ++j) table(r, j + 1) = s(r, j);
    }
    std::vector<std::string> header{"step"};
    header.insert(header.end(), kSeasonalColumns.begin(), kSeasonalColumns.end());
    run.write(file, to_csv(header, table));
    break;
  }
  case SynthKind::sensor_field: {
    const SensorFieldSpec spec = read_field(c, run.seed());
    run.seal();
    run.write(file, sensor_csv(synth_sensor_field(spec)));
    break;
  }
  case SynthKind::degrading_cell: {
    const CellSpec spec = read_cell(c, run.seed(), read_ecm(c));
    run.seal();
    run.write(file, battery_csv(synth_degrading_cell(spec)));
    break;
  }
  }
  run.report() << "synth: wrote " << (run.out() / file).string() << "\n";
  return 0;
}

int cmd_gradcheck(Run &run) {
  Config &c = run.cfg();
  const std::size_t instances = c.get_size("gradcheck.instances", 100);
  const double tolerance = c.get_double("gradcheck.tolerance", 1e-4);
  const double step = c.get_double("gradcheck.step", 1e-6);
  run.seal();
  const auto results = run_gradcheck_suite(instances, tolerance, run.seed(), step);
  std::string csv = "unit,instances,max_rel_error,worst_parameter,passed\n";
  bool ok = true;
  for (const auto &u : results) {
    csv += u.unit + "," + std::to_string(u.instances) + "," + format_double(u.worst) + "," + u.worst_parameter + "," +
           (u.passed ? "true" : "false") + "\n";
    run.report() << "gradcheck " << u.unit << ": max rel error " << u.worst << (u.passed ? " ok" : " FAIL") << "\n";
    ok = ok && u.passed;
  }
  run.write("gradcheck.csv", csv);
  if (!ok) throw std::runtime_error("gradcheck: at least one unit exceeds tolerance " + format_double(tolerance));
  return 0;
}

} // namespace

const std::vector<std::string> &command_names() {
  static const std::vector<std::string> names{"train", "active-learn", "sessions", "concat-sensors",
                                              "battery", "synth", "gradcheck"};
  return names;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const char *env, std::uint64_t config_value) {
  if (flag) return *flag;
  if (env && *env) {
    const std::string s(env);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw ConfigError("VDT_SEED must be an unsigned integer, got '" + s + "'");
    return v;
  }
  return config_value;
}

int run_command(const std::string &name, const CommandOptions &options, std::ostream &report) {
  if (std::find(command_names().begin(), command_names().end(), name) == command_names().end())
    throw ConfigError("unknown command '" + name + "'");
  Run run(name, options, report);
  if (name == "train") return cmd_train(run);
  if (name == "active-learn") return cmd_active(run);
  if (name == "sessions") return cmd_sessions(run);
  if (name == "concat-sensors") return cmd_concat(run);
  if (name == "battery") return cmd_battery(run);
  if (name == "synth") return cmd_synth(run);
  return cmd_gradcheck(run);
}

} // namespace vdt
