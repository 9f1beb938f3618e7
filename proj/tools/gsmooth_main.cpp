// gsmooth: command-line driver wiring the library modules into
// reproducible workflows. Logs go to stderr; data goes to files under the
// run's output directory. Every run writes a manifest (resolved config,
// seed, input-artifact hashes) before any results.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gsmooth/attack.hpp"
#include "gsmooth/certify.hpp"
#include "gsmooth/jacobian.hpp"
#include "gsmooth/surrogate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gsmooth;

namespace {

// ---------------------------------------------------------------------
// Run configuration (JSON file + --set overrides + env seed override).

struct RunConfig {
  std::string transform = "brightness-contrast";
  std::string path = "resolvable";
  double sigma1 = 0.25;
  double sigma2 = 0.10;
  int n0 = 100;
  int n = 10000;
  double alpha = 0.001;
  int grid_points = 7;
  double safety_factor = 1.05;
  double a_hat_multiplier = 10.0;
  std::uint64_t seed = 0;
  // Training extras (not part of the certification contract).
  int epochs = 50;
  int batch_size = 16;
  double lr = 1e-3;
  int epochs_per_halving = 50;
  int c0 = 6, c1 = 8, c2 = 12;
  int val_count = 32;
  bool normalize_gauge = true;
};

void apply_key(RunConfig& cfg, const std::string& key, const json& value) {
  if (key == "transform") cfg.transform = value.get<std::string>();
  else if (key == "path") cfg.path = value.get<std::string>();
  else if (key == "sigma1") cfg.sigma1 = value.get<double>();
  else if (key == "sigma2") cfg.sigma2 = value.get<double>();
  else if (key == "n0") cfg.n0 = value.get<int>();
  else if (key == "n") cfg.n = value.get<int>();
  else if (key == "alpha") cfg.alpha = value.get<double>();
  else if (key == "grid_points") cfg.grid_points = value.get<int>();
  else if (key == "safety_factor") cfg.safety_factor = value.get<double>();
  else if (key == "a_hat_multiplier")
    cfg.a_hat_multiplier = value.get<double>();
  else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
  else if (key == "epochs") cfg.epochs = value.get<int>();
  else if (key == "batch_size") cfg.batch_size = value.get<int>();
  else if (key == "lr") cfg.lr = value.get<double>();
  else if (key == "epochs_per_halving")
    cfg.epochs_per_halving = value.get<int>();
  else if (key == "c0") cfg.c0 = value.get<int>();
  else if (key == "c1") cfg.c1 = value.get<int>();
  else if (key == "c2") cfg.c2 = value.get<int>();
  else if (key == "val_count") cfg.val_count = value.get<int>();
  else if (key == "normalize_gauge")
    cfg.normalize_gauge = value.get<bool>();
  else
    throw FormatError("unknown config key '" + key + "'");
}

json config_to_json(const RunConfig& c) {
  return json{{"transform", c.transform},
              {"path", c.path},
              {"sigma1", c.sigma1},
              {"sigma2", c.sigma2},
              {"n0", c.n0},
              {"n", c.n},
              {"alpha", c.alpha},
              {"grid_points", c.grid_points},
              {"safety_factor", c.safety_factor},
              {"a_hat_multiplier", c.a_hat_multiplier},
              {"seed", c.seed},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"epochs_per_halving", c.epochs_per_halving},
              {"c0", c.c0},
              {"c1", c.c1},
              {"c2", c.c2},
              {"val_count", c.val_count},
              {"normalize_gauge", c.normalize_gauge}};
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // --set key=value
  std::string out_dir = "run";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in)
      throw FormatError("missing config file '" + args.config_path + "'");
    json j = json::parse(in);
    for (auto it = j.begin(); it != j.end(); ++it)
      apply_key(cfg, it.key(), it.value());
  }
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw FormatError("--set expects key=value, got '" + kv + "'");
    apply_key(cfg, kv.substr(0, eq), json::parse(kv.substr(eq + 1)));
  }
  if (const char* env = std::getenv("GSMOOTH_SEED"))
    cfg.seed = std::stoull(env);
  if (args.seed_given) cfg.seed = args.seed;
  return cfg;
}

// ---------------------------------------------------------------------
// Manifest.

std::string file_crc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read input artifact '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ostringstream os;
  os << std::hex
     << crc32(reinterpret_cast<const std::uint8_t*>(bytes.data()),
              bytes.size());
  return os.str();
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg,
                    const std::vector<std::string>& inputs) {
  fs::create_directories(out_dir);
  json inputs_json = json::object();
  for (const std::string& p : inputs) inputs_json[p] = file_crc(p);
  json manifest{{"command", command},
                {"config", config_to_json(cfg)},
                {"seed", cfg.seed},
                {"inputs", inputs_json}};
  std::ofstream out(out_dir + "/manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw FormatError("cannot write manifest in '" + out_dir + "'");
}

// ---------------------------------------------------------------------
// Artifact helpers.

Dataset load_data(const std::string& images, const std::string& labels) {
  Dataset ds = load_mnist_idx(images, labels);
  int max_label = 0;
  for (int l : ds.labels) max_label = std::max(max_label, l);
  ds.num_classes = max_label + 1;
  return ds;
}

void save_surrogate(const SurrogateModel& model, double gauge_scale,
                    const std::string& dir) {
  save_checkpoint(model.parameters(), dir + "/surrogate.ckpt");
  const SurrogateConfig& c = model.config();
  json j{{"transform", c.transform_name}, {"param_dim", c.param_dim},
         {"image_size", c.image_size},    {"channels", c.channels},
         {"c0", c.c0},                    {"c1", c.c1},
         {"c2", c.c2},                    {"gauge_scale", gauge_scale}};
  std::ofstream out(dir + "/surrogate.json");
  out << j.dump(2) << "\n";
}

SurrogateModel load_surrogate(const std::string& dir) {
  std::ifstream in(dir + "/surrogate.json");
  if (!in)
    throw FormatError("missing surrogate descriptor '" + dir +
                      "/surrogate.json'");
  json j = json::parse(in);
  SurrogateConfig c;
  c.transform_name = j.at("transform").get<std::string>();
  c.param_dim = j.at("param_dim").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.channels = j.at("channels").get<int>();
  c.c0 = j.at("c0").get<int>();
  c.c1 = j.at("c1").get<int>();
  c.c2 = j.at("c2").get<int>();
  SurrogateModel model(c, 0);
  ParamList params = model.parameters();
  load_checkpoint_into(dir + "/surrogate.ckpt", params);
  return model;
}

void save_classifier(const Classifier& clf, const std::string& dir) {
  save_checkpoint(clf.parameters(), dir + "/classifier.ckpt");
  json j{{"image_size", clf.image_size()},
         {"channels", clf.channels()},
         {"num_classes", clf.num_classes()}};
  std::ofstream out(dir + "/classifier.json");
  out << j.dump(2) << "\n";
}

Classifier load_classifier(const std::string& dir) {
  std::ifstream in(dir + "/classifier.json");
  if (!in)
    throw FormatError("missing classifier descriptor '" + dir +
                      "/classifier.json'");
  json j = json::parse(in);
  Classifier clf(j.at("image_size").get<int>(),
                 j.at("channels").get<int>(),
                 j.at("num_classes").get<int>(), 0);
  ParamList params = clf.parameters();
  load_checkpoint_into(dir + "/classifier.ckpt", params);
  return clf;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Eigen::MatrixXd calibration_grid(const TransformSpec& spec, int points) {
  return param_grid(spec, points);
}

std::vector<Image> calibration_images(const Dataset& ds, int count) {
  count = std::min<int>(count, static_cast<int>(ds.images.size()));
  return {ds.images.begin(), ds.images.begin() + count};
}

CertifyConfig to_certify_config(const RunConfig& cfg) {
  CertifyConfig c;
  c.sigma1 = cfg.sigma1;
  c.sigma2 = cfg.sigma2;
  c.n0 = cfg.n0;
  c.n = cfg.n;
  c.alpha = cfg.alpha;
  c.path = certify_path_from_name(cfg.path);
  c.seed = cfg.seed;
  return c;
}

// ---------------------------------------------------------------------
// Subcommand implementations. Each returns after writing its outputs.

void cmd_gen_data(const CommonArgs& args, int count, int size, int classes) {
  RunConfig cfg = resolve_config(args);
  write_manifest(args.out_dir, "gen-data", cfg, {});
  Dataset ds = generate_synthetic_shapes(count, size, classes, cfg.seed);
  save_dataset_idx(ds, args.out_dir + "/images.idx",
                   args.out_dir + "/labels.idx");
  std::cerr << "gen-data: wrote " << ds.images.size() << " images ("
            << classes << " classes, " << size << "x" << size << ") to "
            << args.out_dir << "\n";
}

void cmd_apply_transform(const CommonArgs& args, const std::string& images,
                         const std::string& labels, int index,
                         const std::vector<double>& theta) {
  RunConfig cfg = resolve_config(args);
  write_manifest(args.out_dir, "apply-transform", cfg, {images, labels});
  const TransformSpec& spec = transform_spec(cfg.transform);
  Dataset ds = load_data(images, labels);
  if (index < 0 || index >= static_cast<int>(ds.images.size()))
    throw FormatError("index out of range");
  Eigen::VectorXd th =
      Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());
  Image out = apply(spec, th, ds.images[index]);
  write_image(ds.images[index], args.out_dir + "/original.pgm");
  write_image(out, args.out_dir + "/transformed.pgm");
  std::cerr << "apply-transform: " << spec.name << " at theta ["
            << th.transpose() << "]\n";
}

void cmd_train_surrogate(const CommonArgs& args, const std::string& images,
                         const std::string& labels) {
  RunConfig cfg = resolve_config(args);
  write_manifest(args.out_dir, "train-surrogate", cfg, {images, labels});
  const TransformSpec& spec = transform_spec(cfg.transform);
  Dataset all = load_data(images, labels);
  auto [train, val] = split_dataset(
      all, static_cast<int>(all.images.size()) - cfg.val_count, cfg.seed);

  SurrogateConfig scfg;
  scfg.transform_name = spec.name;
  scfg.param_dim = spec.param_dim;
  scfg.image_size = train.images.front().height;
  scfg.channels = train.images.front().channels;
  scfg.c0 = cfg.c0;
  scfg.c1 = cfg.c1;
  scfg.c2 = cfg.c2;

  SurrogateTrainOptions opt;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.lr = static_cast<float>(cfg.lr);
  opt.epochs_per_halving = cfg.epochs_per_halving;
  opt.seed = cfg.seed;
  opt.log = &std::cerr;
  TrainedSurrogate ts = train_surrogate(spec, train, val, scfg, opt);

  double gauge_scale = 1.0;
  if (cfg.normalize_gauge)
    gauge_scale = normalize_latent_gauge(ts.model, spec,
                                         calibration_images(val, 4),
                                         calibration_grid(spec, 3));
  save_surrogate(ts.model, gauge_scale, args.out_dir);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t e = 0; e < ts.val_l1.size(); ++e)
    rows.push_back({std::to_string(e), fmt(ts.train_l1[e]),
                    fmt(ts.val_l1[e])});
  write_csv(args.out_dir + "/training_log.csv",
            {"epoch", "train_l1", "val_l1"}, rows);
  std::cerr << "train-surrogate: final val L1 " << ts.val_l1.back()
            << ", latent gauge scale " << gauge_scale << "\n";
}

void cmd_eval_surrogate(const CommonArgs& args, const std::string& images,
                        const std::string& labels,
                        const std::string& model_dir) {
  RunConfig cfg = resolve_config(args);
  write_manifest(args.out_dir, "eval-surrogate", cfg,
                 {images, labels, model_dir + "/surrogate.ckpt",
                  model_dir + "/surrogate.json"});
  const TransformSpec& spec = transform_spec(cfg.transform);
  SurrogateModel model = load_surrogate(model_dir);
  Dataset all = load_data(images, labels);
  auto [train, val] = split_dataset(
      all, static_cast<int>(all.images.size()) - cfg.val_count, cfg.seed);

  const double eps = measure_epsilon(model, spec, val,
                                     param_grid(spec, cfg.grid_points));
  const double a_hat = estimate_error_ratio_A(
      model, spec, calibration_images(val, 4), calibration_grid(spec, 3),
      cfg.a_hat_multiplier);
  write_csv(args.out_dir + "/eval.csv", {"metric", "value"},
            {{"epsilon", fmt(eps)}, {"a_hat", fmt(a_hat)}});
  std::cerr << "eval-surrogate: epsilon " << eps << ", A_hat " << a_hat
            << "\n";
}

void cmd_train_classifier(const CommonArgs& args, const std::string& images,
                          const std::string& labels,
                          const std::string& surrogate_dir, bool augment) {
  RunConfig cfg = resolve_config(args);
  std::vector<std::string> inputs = {images, labels};
  if (!surrogate_dir.empty())
    inputs.push_back(surrogate_dir + "/surrogate.ckpt");
  write_manifest(args.out_dir, "train-classifier", cfg, inputs);
  const TransformSpec& spec = transform_spec(cfg.transform);
  Dataset all = load_data(images, labels);
  auto [train, val] = split_dataset(
      all, static_cast<int>(all.images.size()) - cfg.val_count, cfg.seed);

  Classifier clf(train.images.front().height,
                 train.images.front().channels, all.num_classes, cfg.seed);
  ClassifierTrainOptions opt;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.lr = static_cast<float>(cfg.lr);
  opt.seed = cfg.seed;
  opt.log = &std::cerr;

  std::optional<SurrogateModel> surrogate;
  if (!surrogate_dir.empty()) surrogate = load_surrogate(surrogate_dir);
  SmoothingAugment aug;
  aug.spec = &spec;
  aug.surrogate = surrogate ? &*surrogate : nullptr;
  aug.sigma1 = cfg.sigma1;
  aug.sigma2 = cfg.sigma2;

  const double acc =
      train_classifier(clf, train, val, opt, augment ? &aug : nullptr);
  save_classifier(clf, args.out_dir);
  write_csv(args.out_dir + "/metrics.csv", {"metric", "value"},
            {{"val_accuracy", fmt(acc)}});
  std::cerr << "train-classifier: val accuracy " << acc << "\n";
}

void cmd_estimate_mstar(const CommonArgs& args, const std::string& images,
                        const std::string& labels,
                        const std::string& surrogate_dir,
                        int calibration_count) {
  RunConfig cfg = resolve_config(args);
  write_manifest(args.out_dir, "estimate-mstar", cfg,
                 {images, labels, surrogate_dir + "/surrogate.ckpt"});
  const TransformSpec& spec = transform_spec(cfg.transform);
  SurrogateModel model = load_surrogate(surrogate_dir);
  Dataset all = load_data(images, labels);
  auto [train, val] = split_dataset(
      all, static_cast<int>(all.images.size()) - cfg.val_count, cfg.seed);

  Eigen::MatrixXd grid = param_grid(spec, cfg.grid_points);
  MStarEstimate est = estimate_m_star_dataset(
      model, calibration_images(val, calibration_count), cfg.sigma1,
      cfg.sigma2, grid, cfg.safety_factor, 30, 3, cfg.seed);

  std::vector<std::string> header;
  for (int d = 0; d < spec.param_dim; ++d)
    header.push_back("xi_" + std::to_string(d));
  header.push_back("residual_norm");
  header.push_back("m_star_term");
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    std::vector<std::string> row;
    for (int d = 0; d < spec.param_dim; ++d) row.push_back(fmt(grid(r, d)));
    row.push_back(fmt(est.residual_norms[static_cast<std::size_t>(r)]));
    row.push_back(fmt(est.m_star_terms[static_cast<std::size_t>(r)]));
    rows.push_back(std::move(row));
  }
  write_csv(args.out_dir + "/mstar_grid.csv", header, rows);

  json j{{"m_star", est.value},
         {"safety_factor", est.safety_factor},
         {"grid_points", est.grid_points},
         {"sigma1", cfg.sigma1},
         {"sigma2", cfg.sigma2}};
  std::ofstream out(args.out_dir + "/mstar.json");
  out << j.dump(2) << "\n";
  std::cerr << "estimate-mstar: M* " << est.value << "\n";
}

struct CertifyInputs {
  double m_star = 0.0;
  double epsilon = 0.0;
  double a_hat = 0.0;
};

CertifyInputs read_certify_inputs(const std::string& mstar_file,
                                  const std::string& eval_file) {
  CertifyInputs in;
  if (!mstar_file.empty()) {
    std::ifstream f(mstar_file);
    if (!f) throw FormatError("missing M* file '" + mstar_file + "'");
    in.m_star = json::parse(f).at("m_star").get<double>();
  }
  if (!eval_file.empty()) {
    for (const auto& row : read_csv(eval_file)) {
      if (row.size() != 2) continue;
      if (row[0] == "epsilon") in.epsilon = std::stod(row[1]);
      if (row[0] == "a_hat") in.a_hat = std::stod(row[1]);
    }
  }
  return in;
}

std::vector<double> parse_sweep_axis(const std::vector<std::string>& sweep,
                                     const std::string& key, double fallback) {
  for (const std::string& term : sweep) {
    const auto eq = term.find('=');
    if (eq == std::string::npos || term.substr(0, eq) != key) continue;
    std::vector<double> values;
    std::stringstream ss(term.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
    if (values.empty())
      throw FormatError("empty sweep axis '" + term + "'");
    return values;
  }
  return {fallback};
}

void cmd_certify(const CommonArgs& args, const std::string& images,
                 const std::string& labels,
                 const std::string& classifier_dir,
                 const std::string& surrogate_dir, int count,
                 const std::string& mstar_file, const std::string& eval_file,
                 const std::vector<std::string>& sweep) {
  RunConfig cfg = resolve_config(args);
  std::vector<std::string> inputs = {images, labels,
                                     classifier_dir + "/classifier.ckpt"};
  if (!surrogate_dir.empty())
    inputs.push_back(surrogate_dir + "/surrogate.ckpt");
  if (!mstar_file.empty()) inputs.push_back(mstar_file);
  if (!eval_file.empty()) inputs.push_back(eval_file);
  write_manifest(args.out_dir, "certify", cfg, inputs);

  const TransformSpec& spec = transform_spec(cfg.transform);
  Classifier clf = load_classifier(classifier_dir);
  std::optional<SurrogateModel> surrogate;
  if (!surrogate_dir.empty()) surrogate = load_surrogate(surrogate_dir);
  Dataset all = load_data(images, labels);
  auto [train, val] = split_dataset(
      all, static_cast<int>(all.images.size()) - cfg.val_count, cfg.seed);
  count = std::min<int>(count, static_cast<int>(val.images.size()));

  const CertifyInputs fixed = read_certify_inputs(mstar_file, eval_file);
  const std::vector<double> s1 = parse_sweep_axis(sweep, "sigma1", cfg.sigma1);
  const std::vector<double> s2 = parse_sweep_axis(sweep, "sigma2", cfg.sigma2);
  const bool sweeping = s1.size() > 1 || s2.size() > 1;

  std::vector<std::vector<std::string>> summary;
  for (double sigma1 : s1) {
    for (double sigma2 : s2) {
      CertifyConfig ccfg = to_certify_config(cfg);
      ccfg.sigma1 = sigma1;
      ccfg.sigma2 = sigma2;
      ccfg.epsilon = fixed.epsilon;
      ccfg.a_hat = fixed.a_hat;
      if (ccfg.path == CertifyPath::surrogate) {
        if (!surrogate)
          throw FormatError("surrogate path requires --surrogate");
        if (fixed.m_star > 0.0 && !sweeping) {
          ccfg.m_star = fixed.m_star;
        } else {
          // M* depends on the noise scales: recompute per sweep cell.
          MStarEstimate est = estimate_m_star_dataset(
              *surrogate, calibration_images(val, 2), sigma1, sigma2,
              param_grid(spec, cfg.grid_points), cfg.safety_factor, 30, 3,
              cfg.seed);
          ccfg.m_star = est.value;
        }
      }

      std::vector<CertificationRecord> records;
      long long certified_correct = 0;
      for (int i = 0; i < count; ++i) {
        CertificationRecord rec = certify_sample(
            clf, spec, surrogate ? &*surrogate : nullptr, val.images[i],
            val.labels[i], i, ccfg);
        if (!rec.abstain && rec.prediction == rec.label)
          ++certified_correct;
        records.push_back(rec);
      }

      std::string name = "certify.csv";
      if (sweeping) {
        std::ostringstream os;
        os << "certify_s1_" << sigma1 << "_s2_" << sigma2 << ".csv";
        name = os.str();
      }
      write_certification_csv(records, args.out_dir + "/" + name);
      summary.push_back(
          {fmt(sigma1), fmt(sigma2), fmt(ccfg.m_star),
           fmt(static_cast<double>(certified_correct) / count), name});
      std::cerr << "certify: sigma1 " << sigma1 << " sigma2 " << sigma2
                << " certified-correct " << certified_correct << "/"
                << count << "\n";
    }
  }
  if (sweeping)
    write_csv(args.out_dir + "/sweep_summary.csv",
              {"sigma1", "sigma2", "m_star", "certified_accuracy", "file"},
              summary);
}

void cmd_attack(const CommonArgs& args, const std::string& images,
                const std::string& labels,
                const std::string& classifier_dir,
                const std::string& surrogate_dir,
                const std::string& certify_file, double budget,
                double budget_scale, int steps, int eot_samples) {
  RunConfig cfg = resolve_config(args);
  std::vector<std::string> inputs = {images, labels,
                                     classifier_dir + "/classifier.ckpt",
                                     surrogate_dir + "/surrogate.ckpt"};
  if (!certify_file.empty()) inputs.push_back(certify_file);
  write_manifest(args.out_dir, "attack", cfg, inputs);

  const TransformSpec& spec = transform_spec(cfg.transform);
  Classifier clf = load_classifier(classifier_dir);
  SurrogateModel surrogate = load_surrogate(surrogate_dir);
  Dataset all = load_data(images, labels);
  auto [train, val] = split_dataset(
      all, static_cast<int>(all.images.size()) - cfg.val_count, cfg.seed);

  CertifyConfig ccfg = to_certify_config(cfg);
  ccfg.path = CertifyPath::surrogate;

  std::vector<AttackRecord> records;
  long long certified = 0;
  if (!certify_file.empty()) {
    // Per-sample budgets from the certification run (scaled).
    for (const CertificationRecord& rec :
         read_certification_csv(certify_file)) {
      if (rec.abstain || rec.prediction != rec.label) continue;
      ++certified;
      AttackConfig acfg;
      acfg.budget = budget_scale * rec.radius_corrected;
      acfg.steps = steps;
      acfg.eot_samples = eot_samples;
      acfg.seed = cfg.seed;
      records.push_back(eot_pgd(clf, spec, surrogate,
                                val.images[rec.sample_id], rec.label,
                                rec.sample_id, acfg, ccfg));
    }
    if (records.empty())
      throw FormatError("no certified, correctly-predicted records in '" +
                        certify_file + "'");
  } else {
    const int count = std::min<int>(20, static_cast<int>(val.images.size()));
    for (int i = 0; i < count; ++i) {
      AttackConfig acfg;
      acfg.budget = budget;
      acfg.steps = steps;
      acfg.eot_samples = eot_samples;
      acfg.seed = cfg.seed;
      records.push_back(eot_pgd(clf, spec, surrogate, val.images[i],
                                val.labels[i], i, acfg, ccfg));
    }
  }
  write_attack_csv(records, args.out_dir + "/attack.csv");
  const double robust = empirical_robust_accuracy(records);
  std::cerr << "attack: empirical robust accuracy " << robust << " over "
            << records.size() << " samples";
  if (certified > 0) std::cerr << " (" << certified << " certified)";
  std::cerr << "\n";
}

void cmd_report(const CommonArgs& args, const std::string& in_dir,
                const std::vector<double>& radii) {
  RunConfig cfg = resolve_config(args);
  write_manifest(args.out_dir, "report", cfg, {in_dir + "/certify.csv"});
  std::vector<CertificationRecord> records =
      read_certification_csv(in_dir + "/certify.csv");
  std::vector<CertifiedAccuracyRow> rows =
      certified_accuracy_report(records, radii);
  std::vector<std::vector<std::string>> out;
  for (const CertifiedAccuracyRow& r : rows)
    out.push_back({fmt(r.threshold), fmt(r.accuracy)});
  write_csv(args.out_dir + "/report.csv", {"radius", "certified_accuracy"},
            out);
  std::cerr << "report: " << rows.size() << " thresholds over "
            << records.size() << " records\n";
}

void cmd_noise_dump(const CommonArgs& args, const std::string& images,
                    const std::string& labels,
                    const std::string& surrogate_dir, int index) {
  RunConfig cfg = resolve_config(args);
  write_manifest(args.out_dir, "noise-dump", cfg,
                 {images, labels, surrogate_dir + "/surrogate.ckpt"});
  SurrogateModel model = load_surrogate(surrogate_dir);
  Dataset ds = load_data(images, labels);
  if (index < 0 || index >= static_cast<int>(ds.images.size()))
    throw FormatError("index out of range");
  const Image& x = ds.images[index];

  Rng rng = make_rng(cfg.seed, 0xF16);
  std::normal_distribution<float> nd(0.0f, static_cast<float>(cfg.sigma2));

  // Noise injected into the latent sum: structured, semantic perturbation.
  Eigen::VectorXd latent_noise(model.latent_dim());
  for (Eigen::Index i = 0; i < latent_noise.size(); ++i)
    latent_noise[i] = nd(rng);
  Image latent_noised = model.evaluate(
      Eigen::VectorXd::Zero(model.config().param_dim), x, &latent_noise);

  // The same noise budget spent directly on pixels, for contrast.
  Image pixel_noised = x;
  for (Eigen::Index i = 0; i < pixel_noised.pixels.size(); ++i)
    pixel_noised.pixels[i] += nd(rng);
  clamp01(pixel_noised);

  write_image(x, args.out_dir + "/original.pgm");
  write_image(latent_noised, args.out_dir + "/latent_noised.pgm");
  write_image(pixel_noised, args.out_dir + "/pixel_noised.pgm");
  std::cerr << "noise-dump: wrote triplet for sample " << index << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GSmooth: certified robustness against semantic "
               "transformations via generalized randomized smoothing"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--set", common.overrides,
                    "config overrides as key=value");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "seed override")
        ->each([&common](const std::string&) { common.seed_given = true; });
  };

  int count = 400, size = 16, classes = 4, index = 0;
  int calibration_count = 2, steps = 40, eot_samples = 32;
  int certify_count = 20;
  double budget = 0.25, budget_scale = 1.0;
  std::string images, labels, model_dir, classifier_dir, surrogate_dir;
  std::string mstar_file, eval_file, certify_file, in_dir;
  std::vector<double> theta, radii;
  std::vector<std::string> sweep;
  bool no_augment = false;

  CLI::App* gen = app.add_subcommand("gen-data", "synthetic shapes dataset");
  add_common(gen);
  gen->add_option("--count", count);
  gen->add_option("--size", size);
  gen->add_option("--classes", classes);

  CLI::App* at = app.add_subcommand("apply-transform",
                                    "apply one transformation");
  add_common(at);
  at->add_option("--images", images)->required();
  at->add_option("--labels", labels)->required();
  at->add_option("--index", index);
  at->add_option("--theta", theta, "parameter vector")->required();

  CLI::App* tsur = app.add_subcommand("train-surrogate",
                                      "train the surrogate network");
  add_common(tsur);
  tsur->add_option("--images", images)->required();
  tsur->add_option("--labels", labels)->required();

  CLI::App* esur = app.add_subcommand("eval-surrogate",
                                      "measure surrogate error");
  add_common(esur);
  esur->add_option("--images", images)->required();
  esur->add_option("--labels", labels)->required();
  esur->add_option("--model", model_dir, "surrogate run directory")
      ->required();

  CLI::App* tclf = app.add_subcommand("train-classifier",
                                      "train the base classifier");
  add_common(tclf);
  tclf->add_option("--images", images)->required();
  tclf->add_option("--labels", labels)->required();
  tclf->add_option("--surrogate", surrogate_dir,
                   "augment through this surrogate");
  tclf->add_flag("--no-augment", no_augment,
                 "disable smoothing augmentation");

  CLI::App* ms = app.add_subcommand("estimate-mstar",
                                    "grid-estimate the M* coefficient");
  add_common(ms);
  ms->add_option("--images", images)->required();
  ms->add_option("--labels", labels)->required();
  ms->add_option("--surrogate", surrogate_dir)->required();
  ms->add_option("--calibration-count", calibration_count);

  CLI::App* cert = app.add_subcommand("certify", "certify samples");
  add_common(cert);
  cert->add_option("--images", images)->required();
  cert->add_option("--labels", labels)->required();
  cert->add_option("--classifier", classifier_dir)->required();
  cert->add_option("--surrogate", surrogate_dir);
  cert->add_option("--count", certify_count, "samples to certify");
  cert->add_option("--mstar-file", mstar_file, "mstar.json from estimate-mstar");
  cert->add_option("--eval-file", eval_file, "eval.csv from eval-surrogate");
  cert->add_option("--sweep", sweep,
                   "axis sweeps, e.g. sigma1=0.1,0.25 sigma2=0.05,0.1");

  CLI::App* atk = app.add_subcommand("attack", "EoT-PGD adaptive attack");
  add_common(atk);
  atk->add_option("--images", images)->required();
  atk->add_option("--labels", labels)->required();
  atk->add_option("--classifier", classifier_dir)->required();
  atk->add_option("--surrogate", surrogate_dir)->required();
  atk->add_option("--certify-file", certify_file,
                  "per-sample budgets from this certification CSV");
  atk->add_option("--budget", budget, "fixed budget when no certify file");
  atk->add_option("--budget-scale", budget_scale,
                  "multiplier on each certified radius");
  atk->add_option("--steps", steps);
  atk->add_option("--eot-samples", eot_samples);

  CLI::App* rep = app.add_subcommand("report", "certified-accuracy table");
  add_common(rep);
  rep->add_option("--in", in_dir, "certify run directory")->required();
  rep->add_option("--radii", radii, "thresholds")->required();

  CLI::App* nd = app.add_subcommand("noise-dump",
                                    "original / latent-noised / "
                                    "pixel-noised image triplet");
  add_common(nd);
  nd->add_option("--images", images)->required();
  nd->add_option("--labels", labels)->required();
  nd->add_option("--surrogate", surrogate_dir)->required();
  nd->add_option("--index", index);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) cmd_gen_data(common, count, size, classes);
    else if (at->parsed())
      cmd_apply_transform(common, images, labels, index, theta);
    else if (tsur->parsed()) cmd_train_surrogate(common, images, labels);
    else if (esur->parsed())
      cmd_eval_surrogate(common, images, labels, model_dir);
    else if (tclf->parsed())
      cmd_train_classifier(common, images, labels, surrogate_dir,
                           !no_augment);
    else if (ms->parsed())
      cmd_estimate_mstar(common, images, labels, surrogate_dir,
                         calibration_count);
    else if (cert->parsed())
      cmd_certify(common, images, labels, classifier_dir, surrogate_dir,
                  certify_count, mstar_file, eval_file, sweep);
    else if (atk->parsed())
      cmd_attack(common, images, labels, classifier_dir, surrogate_dir,
                 certify_file, budget, budget_scale, steps, eot_samples);
    else if (rep->parsed()) cmd_report(common, in_dir, radii);
    else if (nd->parsed())
      cmd_noise_dump(common, images, labels, surrogate_dir, index);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
