#include "commands.hpp"

#include <stabkit/attack.hpp>
#include <stabkit/bounds.hpp>
#include <stabkit/dataset.hpp>
#include <stabkit/error.hpp>
#include <stabkit/pipeline.hpp>
#include <stabkit/surrogates.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#ifndef STABKIT_VERSION
#define STABKIT_VERSION "0.0.0"
#endif

namespace stabkit::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ParseError(what + ": cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_timeout(const std::string& s) {
  if (s == "inf" || s == "infinity" || s == "none") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !(v >= 0.0)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("--timeout: expected seconds or \"inf\", got '" + s + "'");
  }
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string vec_str(const Vector& v) {
  std::ostringstream os;
  os << std::setprecision(10) << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ']';
  return os.str();
}

std::vector<std::size_t> select_points(const std::optional<std::size_t>& point, std::size_t n) {
  if (point) {
    if (*point >= n)
      throw ValidationError("--point: " + std::to_string(*point) + " out of range (dataset has " +
                            std::to_string(n) + " points)");
    return {*point};
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  return all;
}

StabilityConfig property_from(const std::string& path) {
  if (path.empty()) return {};
  return stability_config_from_json(read_json(path, "property"));
}

// ---- verify ----

struct VerifyOptions {
  std::string config, model, data, property, bricks, timeout, out, method;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  bool dump_milp = false;
};

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = run_config_from_json(read_json(o.config, "config"), cfg);
  if (!o.property.empty()) cfg.property = property_from(o.property);
  if (!o.model.empty()) cfg.model = o.model;
  if (!o.data.empty()) cfg.data = o.data;
  if (!o.bricks.empty()) cfg.bricks = split_list(o.bricks);
  if (!o.timeout.empty()) cfg.solver.timeout_s = parse_timeout(o.timeout);
  if (!o.method.empty()) cfg.bounds_method = bound_method_from_string(o.method);
  if (!o.out.empty()) cfg.out = o.out;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.seed) cfg.seed = *o.seed;
  if (cfg.model.empty()) throw ValidationError("model: no model file given (--model)");
  if (cfg.data.empty()) throw ValidationError("data: no dataset file given (--data)");
  if (cfg.out.empty()) cfg.out = default_out_dir();
  if (cfg.jobs == 0) throw ValidationError("jobs: must be at least 1");
  cfg.property.validate();

  const DenseNetwork net = load_network(cfg.model);
  const auto points = load_points(cfg.data, net.input_dim());
  if (points.empty()) throw ValidationError("data: " + cfg.data.string() + " has no points");
  fs::create_directories(cfg.out);
  if (o.dump_milp) {
    cfg.solver.dump_dir = cfg.out / "milp";
    fs::create_directories(*cfg.solver.dump_dir);
  }
  const auto bricks = make_bricks(cfg);

  json digests = {{"model", file_sha256(cfg.model)}, {"data", file_sha256(cfg.data)}};
  if (!o.property.empty()) digests["property"] = file_sha256(o.property);
  if (!o.config.empty()) digests["config"] = file_sha256(o.config);

  const std::string started = utc_now();
  const PipelineReport report =
      run_pipeline(net, points, bricks, cfg.property, PipelineOptions{cfg.jobs});
  const ReportSummary summary = summarize_report(report);

  json doc = summary.json;
  doc["manifest"] = {{"tool", "stabkit"},
                     {"version", STABKIT_VERSION},
                     {"seed", cfg.seed},
                     {"config", to_json(cfg)},
                     {"digests", digests},
                     {"started_at", started},
                     {"finished_at", utc_now()}};

  write_text(cfg.out / "report.json", doc.dump(2) + "\n");
  write_text(cfg.out / "summary.txt", summary.text);
  write_text(cfg.out / "attack_histogram.csv", histogram_csv(report));
  write_text(cfg.out / "points.csv", points_csv(report));

  out << summary.text;
  out << "report: " << (cfg.out / "report.json").string() << '\n';
  return report.unknown == 0 ? kAllDecided : kSomeUnknown;
}

// ---- gen ----

struct GenOptions {
  std::string preset, spec, dims, out, checkpoints;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> output_scale, learning_rate;
  std::size_t points = 100;
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
  SurrogateSpec spec = !o.spec.empty() ? surrogate_spec_from_json(read_json(o.spec, "spec"))
                                       : preset_spec(o.preset.empty() ? "rosenbrock" : o.preset);
  if (o.epochs) spec.epochs = *o.epochs;
  if (o.seed) spec.seed = *o.seed;
  if (o.output_scale) spec.output_scale = *o.output_scale;
  if (o.learning_rate) spec.learning_rate = *o.learning_rate;
  if (!o.dims.empty()) {
    spec.widths.clear();
    for (const auto& d : split_list(o.dims)) {
      try {
        spec.widths.push_back(std::stoul(d));
      } catch (const std::exception&) {
        throw ParseError("--dims: '" + d + "' is not a width");
      }
    }
    if (!spec.widths.empty() && static_cast<std::size_t>(spec.domain_lower.size()) != spec.widths[0]) {
      spec.domain_lower = Vector::Constant(static_cast<Eigen::Index>(spec.widths[0]), -1.0);
      spec.domain_upper = Vector::Constant(static_cast<Eigen::Index>(spec.widths[0]), 1.0);
    }
  }
  if (!o.checkpoints.empty()) {
    spec.checkpoints.clear();
    for (const auto& c : split_list(o.checkpoints)) spec.checkpoints.push_back(std::stoi(c));
  }
  spec.validate();
  if (o.points == 0) throw ValidationError("--points: must be at least 1");

  const fs::path dir = o.out.empty() ? default_out_dir() : fs::path(o.out);
  fs::create_directories(dir);

  const TrainResult trained = train_surrogate(spec);
  const Dataset test = generate_dataset(spec, o.points, 1);

  save_network(trained.model, dir / "model.json");
  for (const auto& [epoch, model] : trained.checkpoints)
    save_network(model, dir / ("model_epoch_" + std::to_string(epoch) + ".json"));
  std::vector<Vector> pts;
  for (Eigen::Index c = 0; c < test.inputs.cols(); ++c) pts.emplace_back(test.inputs.col(c));
  save_points(pts, dir / "data.csv");
  {
    std::ostringstream log;
    log << std::setprecision(17) << "epoch,mse\n";
    for (std::size_t e = 0; e < trained.epoch_mse.size(); ++e)
      log << e + 1 << ',' << trained.epoch_mse[e] << '\n';
    write_text(dir / "train_log.csv", log.str());
  }
  write_text(dir / "spec.json", to_json(spec).dump(2) + "\n");

  out << "surrogate: " << to_string(spec.target) << ", widths";
  for (std::size_t i = 0; i < spec.widths.size(); ++i) out << (i ? "x" : " ") << spec.widths[i];
  out << ", seed " << spec.seed << '\n';
  out << "epochs: " << spec.epochs;
  if (!trained.epoch_mse.empty())
    out << ", final training mse " << trained.epoch_mse.back();
  out << '\n';
  out << "held-out mse (" << o.points << " points): " << mean_squared_error(trained.model, test)
      << '\n';
  out << "wrote " << dir.string() << "/{model.json,data.csv,train_log.csv,spec.json}\n";
  return kAllDecided;
}

// ---- bounds ----

struct BoundsOptions {
  std::string model, data, property, method = "best", dump;
  std::optional<std::size_t> point;
};

int cmd_bounds(const BoundsOptions& o, std::ostream& out) {
  const DenseNetwork net = load_network(o.model);
  const auto points = load_points(o.data, net.input_dim());
  const StabilityConfig prop = property_from(o.property);
  prop.validate();
  const BoundMethod method = bound_method_from_string(o.method);
  json dump = json::array();

  out << std::setprecision(10);
  for (std::size_t p : select_points(o.point, points.size())) {
    const Vector& x = points[p];
    const Vector f_x = net.forward(x);
    const PerturbationBox box = build_box(x, prop.p_inp, prop.abs_floor);
    const DeltaBounds deltas = compute_deltas(f_x, prop);
    const CertifyResult c = certify_detailed(net, x, box, deltas, method);
    out << "point " << p << " (" << to_string(method) << "): "
        << (c.verdict.status == Status::Verified ? "certified" : "not certified") << '\n';
    for (Eigen::Index i = 0; i < f_x.size(); ++i) {
      const bool fits = f_x(i) + deltas.lower(i) <= c.lower(i) && c.upper(i) <= f_x(i) + deltas.upper(i);
      out << "  [" << i << "] f=" << f_x(i) << "  L=" << c.lower(i) << "  U=" << c.upper(i)
          << "  allowed=[" << f_x(i) + deltas.lower(i) << ", " << f_x(i) + deltas.upper(i) << "]"
          << (fits ? "" : "  exceeds") << '\n';
    }
    if (!o.dump.empty()) {
      LayerBounds lb;
      switch (method) {
        case BoundMethod::Interval: lb = interval_propagate(net, box); break;
        case BoundMethod::Crown: lb = crown_propagate(net, box, interval_propagate(net, box)); break;
        default: lb = symbolic_propagate(net, box).bounds; break;
      }
      dump.push_back({{"point", p}, {"layers", to_json(lb)}});
    }
  }
  if (!o.dump.empty()) write_text(o.dump, dump.dump(2) + "\n");
  return kAllDecided;
}

// ---- attack ----

struct AttackOptions {
  std::string model, data, property, direction = "both", method = "pgd";
  std::optional<std::size_t> point, index;
  int steps = 20;
  double step_size = 0.01;
  int restarts = 0;
  std::uint64_t seed = 0;
};

int cmd_attack(const AttackOptions& o, std::ostream& out) {
  const DenseNetwork net = load_network(o.model);
  const auto points = load_points(o.data, net.input_dim());
  const StabilityConfig prop = property_from(o.property);
  prop.validate();

  AttackConfig cfg;
  if (o.method == "pgd") {
    cfg.method = AttackMethod::PGD;
  } else if (o.method == "fgsm") {
    cfg.method = AttackMethod::FGSM;
  } else {
    throw ParseError("--method: expected pgd or fgsm");
  }
  cfg.steps = o.steps;
  cfg.step_size = o.step_size;
  cfg.restarts = o.restarts;
  cfg.seed = o.seed;
  cfg.validate();

  std::vector<Direction> dirs;
  if (o.direction == "+" || o.direction == "up") dirs = {Direction::Up};
  else if (o.direction == "-" || o.direction == "down") dirs = {Direction::Down};
  else if (o.direction == "both") dirs = {Direction::Up, Direction::Down};
  else throw ParseError("--direction: expected +, - or both");
  if (o.index && *o.index >= net.output_dim())
    throw ValidationError("--index: " + std::to_string(*o.index) + " out of range");

  out << std::setprecision(10);
  for (std::size_t p : select_points(o.point, points.size())) {
    const Vector& x = points[p];
    const Vector f_x = net.forward(x);
    const PerturbationBox box = build_box(x, prop.p_inp, prop.abs_floor);
    const DeltaBounds deltas = compute_deltas(f_x, prop);
    const AttackTarget target{net, x, f_x, box, deltas, prop.p_inp};
    std::optional<Witness> found;
    if (o.index) {
      for (Direction d : dirs) {
        found = attack_index(target, *o.index, d, cfg);
        if (found) break;
      }
    } else {
      found = attack_point(net, x, cfg, prop).witness;
    }
    if (found) {
      out << "point " << p << ": witness at index " << found->index << ", deviation "
          << found->deviation << ", allowed [" << deltas.lower(static_cast<Eigen::Index>(found->index))
          << ", " << deltas.upper(static_cast<Eigen::Index>(found->index)) << "]\n"
          << "  x' = " << vec_str(found->x_prime) << '\n';
    } else {
      out << "point " << p << ": no attack found\n";
    }
  }
  return kAllDecided;
}

}  // namespace

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest initialization failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

fs::path default_out_dir() {
  if (const char* env = std::getenv("STABKIT_OUT_DIR"); env && *env) return env;
  return "stabkit_out";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local stability verification for ReLU regression networks"};
  app.set_version_flag("--version", STABKIT_VERSION);
  app.require_subcommand(1);

  VerifyOptions vo;
  auto* verify = app.add_subcommand("verify", "Run the verification pipeline over a dataset");
  verify->add_option("--config", vo.config, "Run config JSON");
  verify->add_option("--model", vo.model, "Model JSON");
  verify->add_option("--data", vo.data, "Dataset CSV (one point per row)");
  verify->add_option("--property", vo.property, "Property config JSON");
  verify->add_option("--bricks", vo.bricks, "Comma-separated bricks: attack,bounds,complete");
  verify->add_option("--timeout", vo.timeout, "Per-point solver timeout in seconds, or inf");
  verify->add_option("--jobs", vo.jobs, "Worker threads");
  verify->add_option("--seed", vo.seed, "Seed for attack restarts");
  verify->add_option("--method", vo.method, "Bounds method: interval, symbolic, crown, best");
  verify->add_option("--out", vo.out, "Output directory (default $STABKIT_OUT_DIR)");
  verify->add_flag("--dump-milp", vo.dump_milp, "Write each encoded MILP as text");

  GenOptions go;
  auto* gen = app.add_subcommand("gen", "Generate a surrogate model and test points");
  gen->add_option("--preset", go.preset, "rosenbrock, braking or random-shape");
  gen->add_option("--spec", go.spec, "Surrogate spec JSON");
  gen->add_option("--epochs", go.epochs, "Training epochs");
  gen->add_option("--seed", go.seed, "Seed");
  gen->add_option("--dims", go.dims, "Comma-separated layer widths, input first");
  gen->add_option("--points", go.points, "Number of test points");
  gen->add_option("--checkpoints", go.checkpoints, "Comma-separated epochs to keep");
  gen->add_option("--output-scale", go.output_scale, "Scale of the last layer's initialization");
  gen->add_option("--lr", go.learning_rate, "Learning rate");
  gen->add_option("--out", go.out, "Output directory (default $STABKIT_OUT_DIR)");

  BoundsOptions bo;
  auto* bounds = app.add_subcommand("bounds", "Print output bounds for dataset points");
  bounds->add_option("--model", bo.model, "Model JSON")->required();
  bounds->add_option("--data", bo.data, "Dataset CSV")->required();
  bounds->add_option("--property", bo.property, "Property config JSON");
  bounds->add_option("--method", bo.method, "interval, symbolic, crown or best");
  bounds->add_option("--point", bo.point, "Point index (default: all)");
  bounds->add_option("--dump", bo.dump, "Write per-layer bounds JSON here");

  AttackOptions ao;
  auto* attack = app.add_subcommand("attack", "Search for counterexamples by gradient attack");
  attack->add_option("--model", ao.model, "Model JSON")->required();
  attack->add_option("--data", ao.data, "Dataset CSV")->required();
  attack->add_option("--property", ao.property, "Property config JSON");
  attack->add_option("--point", ao.point, "Point index (default: all)");
  attack->add_option("--index", ao.index, "Output index (default: all)");
  attack->add_option("--direction", ao.direction, "+, - or both");
  attack->add_option("--method", ao.method, "pgd or fgsm");
  attack->add_option("--steps", ao.steps, "PGD steps");
  attack->add_option("--step-size", ao.step_size, "PGD step, relative to |x|");
  attack->add_option("--restarts", ao.restarts, "Random restarts");
  attack->add_option("--seed", ao.seed, "Seed for restarts");

  std::vector<const char*> argv{"stabkit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kAllDecided : kError;
  }

  try {
    if (*verify) return cmd_verify(vo, out);
    if (*gen) return cmd_gen(go, out);
    if (*bounds) return cmd_bounds(bo, out);
    if (*attack) return cmd_attack(ao, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}

}  // namespace stabkit::cli
