#include "sidlab/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "sidlab/attacks.hpp"
#include "sidlab/classifiers.hpp"
#include "sidlab/data.hpp"
#include "sidlab/detector.hpp"
#include "sidlab/io.hpp"
#include "sidlab/theory.hpp"
#include "sidlab/threading.hpp"
#include "sidlab/wavelet.hpp"

namespace sidlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void merge_defaults(json& cfg, const json& defaults) {
  for (auto it = defaults.begin(); it != defaults.end(); ++it) {
    if (!cfg.contains(it.key()))
      cfg[it.key()] = it.value();
    else if (cfg[it.key()].is_object() && it.value().is_object())
      merge_defaults(cfg[it.key()], it.value());
  }
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path))
    throw UsageError(what + " not found: " + path);
}

WaveletFilter filter_from_cfg(const json& cfg, const std::string& key) {
  const std::string name = cfg.value(key, "sym17");
  if (name == "sym17") return WaveletFilter::sym17();
  if (name == "haar") return WaveletFilter::haar();
  require_file(name, "wavelet coefficient file");
  return WaveletFilter::load(name);
}

Dataset dataset_from_cfg(const json& d) {
  const std::string type = d.value("type", "mixture");
  Dataset ds;
  if (type == "mixture") {
    MixtureConfig mc;
    mc.num_classes = d.value("classes", 5);
    mc.per_class = d.value("per_class", 150);
    mc.dim = d.value("dim", 256);
    mc.mean_scale = d.value("mean_scale", 2.2);
    mc.sigma_lo = d.value("sigma_lo", 0.9);
    mc.sigma_hi = d.value("sigma_hi", 1.1);
    mc.bump_scale = d.value("bump_scale", 0.5);
    mc.bump_rank = d.value("bump_rank", 4);
    mc.seed = d.value("seed", 1);
    ds = gen_gaussian_mixture(mc).first;
    if (d.value("rescale_unit", false)) ds = rescale_to_unit(ds);
  } else if (type == "idx") {
    const std::string images = d.value("images", "");
    const std::string labels = d.value("labels", "");
    require_file(images, "IDX image file");
    require_file(labels, "IDX label file");
    ds = load_idx(images, labels, d.value("downsample16", false));
  } else if (type == "cifar") {
    const std::string path = d.value("path", "");
    require_file(path, "CIFAR binary file");
    ds = load_cifar_binary(path, d.value("downsample16", false));
  } else {
    throw UsageError("unknown dataset type '" + type + "'");
  }
  return ds;
}

Splits split_from_cfg(const Dataset& ds, const json& cfg) {
  SplitSpec spec;
  if (cfg.contains("split")) {
    const json& s = cfg["split"];
    spec.train = s.value("train", 0.7);
    spec.validation = s.value("validation", 0.0);
    spec.test = s.value("test", 0.3);
    spec.seed = s.value("seed", 11);
  }
  return split(ds, spec);
}

MlpConfig mlp_from_cfg(const json& m) {
  MlpConfig cfg;
  cfg.hidden = m.value("hidden", std::vector<int>{256, 128});
  cfg.epochs = m.value("epochs", 100);
  cfg.batch = m.value("batch", 64);
  cfg.adam.lr = m.value("lr", 1e-3);
  cfg.seed = m.value("seed", 1);
  return cfg;
}

AnyClassifier fit_primal_from_cfg(const Dataset& train, const json& model) {
  const std::string kind = model.value("kind", "mlp");
  AnyClassifier c;
  if (kind == "affine") {
    c.model = fit_affine(train);
  } else if (kind == "quadratic") {
    c.model = fit_quadratic(train, model.value("shrinkage", 0.0));
  } else if (kind == "mlp") {
    c.model = fit_mlp(train, mlp_from_cfg(model));
  } else {
    throw UsageError("unknown model kind '" + kind + "'");
  }
  return c;
}

AttackConfig attack_from_cfg(const json& a) {
  AttackConfig cfg;
  cfg.method = a.value("method", "deepfool");
  cfg.epsilon = a.value("epsilon", 0.05);
  cfg.step = a.value("step", cfg.epsilon / 4.0);
  cfg.eta = a.value("eta", 0.5);
  cfg.iters = a.value("iters", 10);
  cfg.overshoot = a.value("overshoot", 0.02);
  cfg.deepfool_max_iters = a.value("max_iters", 50);
  cfg.cw_c = a.value("c", 1.0);
  cfg.cw_kappa = a.value("kappa", 0.0);
  cfg.cw_steps = a.value("steps", 200);
  cfg.cw_lr = a.value("lr", 5e-2);
  cfg.wb_alpha = a.value("alpha", 0.1);
  cfg.wb_steps = a.value("wb_steps", 40);
  cfg.seed = a.value("seed", 0);
  return cfg;
}

AttackFn make_attack_fn(const AttackConfig& cfg, const IClassifier& f,
                        const Domain& dom) {
  return [cfg, &f, dom](const Tensor& x, int label) {
    return run_attack(cfg, f, x, label, dom);
  };
}

struct RunLog {
  std::ofstream out;
  std::chrono::steady_clock::time_point t0;
  explicit RunLog(const std::string& outdir)
      : out(outdir + "/run.log"), t0(std::chrono::steady_clock::now()) {
    const auto now = std::chrono::system_clock::now();
    out << "started " << std::chrono::system_clock::to_time_t(now) << "\n";
  }
  void line(const std::string& s) { out << s << "\n"; }
  ~RunLog() {
    const auto dt = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - t0);
    out << "elapsed_ms " << dt.count() << "\n";
  }
};

void snapshot_config(const json& cfg, const std::string& outdir) {
  std::ofstream out(outdir + "/config.json");
  out << cfg.dump(1) << "\n";
}

std::string fd(double v) { return fmt_double(v); }

}  // namespace

json default_config(const std::string& command) {
  json d;
  d["seed"] = 1;
  d["dataset"] = {{"type", "mixture"},   {"classes", 5},
                  {"per_class", 150},    {"dim", 256},
                  {"mean_scale", 2.2},   {"sigma_lo", 0.18},
                  {"sigma_hi", 0.2},     {"bump_scale", 0.1},
                  {"bump_rank", 4},      {"seed", 7},
                  {"rescale_unit", true},
                  {"split", {{"train", 0.7}, {"validation", 0.0}, {"test", 0.3}, {"seed", 11}}}};
  if (command == "train-primal") {
    d["model"] = {{"kind", "mlp"}, {"hidden", {64, 32}}, {"epochs", 60},
                  {"batch", 64},   {"lr", 1e-3},         {"seed", 3}};
  } else if (command == "train-dual") {
    d["primal"] = "";
    d["dual"] = {{"kind", "mlp"}, {"filter", "sym17"}, {"hidden", {64, 32}},
                 {"epochs", 60},  {"batch", 64},       {"lr", 1e-3},
                 {"seed", 4},     {"shrinkage", 0.0}};
    d["track_attack"] = {{"method", "deepfool"}};
  } else if (command == "attack") {
    d["primal"] = "";
    d["attack"] = {{"method", "deepfool"}};
    d["grid"] = json::array();
    d["store_examples"] = false;
  } else if (command == "train-sid") {
    d["primal"] = "";
    d["dual"] = "";
    d["attack"] = {{"method", "deepfool"}};
    d["sid"] = {{"hidden", 128}, {"epochs", 30}, {"batch", 64},
                {"lr", 1e-3},    {"seed", 5},    {"concat_features", false}};
  } else if (command == "eval-sid") {
    d["primal"] = "";
    d["dual"] = "";
    d["sids"] = json::array();
    d["targets"] = json::array({{{"method", "deepfool"}}});
    d["whitebox"] = nullptr;
  } else if (command == "verify-bounds") {
    d["bounds"] = {{"classes", 10},        {"per_class", 100},
                   {"dim", 256},           {"eta", 0.5},
                   {"filter", "sym17"},    {"sigma", 0.18},
                   {"sigma_spread", 0.05}, {"mean_row", 2.5},
                   {"mean_perp_frac", 0.85}, {"bump_scale", 0.1},
                   {"bump_rank", 4},       {"qda_shrinkage", 0.5},
                   {"t_max_frac", 1.0},    {"t_points", 51},
                   {"trials_note", "one adversarial counterpart per example"},
                   {"empirical", "model"}};
  } else if (command == "emit-features") {
    d["primal"] = "";
    d["dual"] = "";
    d["attack"] = {{"method", "deepfool"}};
  } else {
    throw UsageError("unknown command '" + command + "'");
  }
  return d;
}

void run_command(const std::string& command, const json& cfg_in,
                 const std::string& outdir) {
  fs::create_directories(outdir);
  json cfg = cfg_in;
  merge_defaults(cfg, default_config(command));
  snapshot_config(cfg, outdir);
  if (command == "train-primal") return cmd_train_primal(cfg, outdir);
  if (command == "train-dual") return cmd_train_dual(cfg, outdir);
  if (command == "attack") return cmd_attack(cfg, outdir);
  if (command == "train-sid") return cmd_train_sid(cfg, outdir);
  if (command == "eval-sid") return cmd_eval_sid(cfg, outdir);
  if (command == "verify-bounds") return cmd_verify_bounds(cfg, outdir);
  if (command == "emit-features") return cmd_emit_features(cfg, outdir);
  throw UsageError("unknown command '" + command + "'");
}

// ---------------------------------------------------------------------------

void cmd_train_primal(const json& cfg, const std::string& outdir) {
  RunLog log(outdir);
  const Dataset full = dataset_from_cfg(cfg.at("dataset"));
  const Splits s = split_from_cfg(full, cfg.at("dataset"));
  const AnyClassifier primal = fit_primal_from_cfg(s.train, cfg.at("model"));
  save_checkpoint(outdir + "/primal.json", primal);

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"train", fd(accuracy(primal.ref(), s.train)),
                  std::to_string(s.train.size())});
  if (s.test.size() > 0)
    rows.push_back({"test", fd(accuracy(primal.ref(), s.test)),
                    std::to_string(s.test.size())});
  write_csv(outdir + "/report.csv", {"split", "accuracy", "n"}, rows);
  log.line("train-primal done");
}

void cmd_train_dual(const json& cfg, const std::string& outdir) {
  RunLog log(outdir);
  const std::string primal_path = cfg.value("primal", "");
  require_file(primal_path, "primal checkpoint");
  const AnyClassifier primal = load_checkpoint(primal_path);

  const Dataset full = dataset_from_cfg(cfg.at("dataset"));
  const Splits s = split_from_cfg(full, cfg.at("dataset"));

  const json& dj = cfg.at("dual");
  DualConfig dc;
  const std::string kind = dj.value("kind", "mlp");
  dc.kind = kind == "affine"      ? ClassifierKind::kAffine
            : kind == "quadratic" ? ClassifierKind::kQuadratic
                                  : ClassifierKind::kMlp;
  dc.filter = filter_from_cfg(dj, "filter");
  dc.qda_shrinkage = dj.value("shrinkage", 0.0);
  dc.mlp = mlp_from_cfg(dj);
  AnyClassifier dual;
  dual.model = build_dual(s.train, dc);
  save_checkpoint(outdir + "/dual.json", dual);

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"primal", "train", fd(accuracy(primal.ref(), s.train)),
                  std::to_string(s.train.size())});
  rows.push_back({"dual", "train", fd(accuracy(dual.ref(), s.train)),
                  std::to_string(s.train.size())});
  if (s.test.size() > 0) {
    rows.push_back({"primal", "test", fd(accuracy(primal.ref(), s.test)),
                    std::to_string(s.test.size())});
    rows.push_back({"dual", "test", fd(accuracy(dual.ref(), s.test)),
                    std::to_string(s.test.size())});
    rows.push_back({"agreement", "test",
                    fd(agreement(primal.ref(), dual.ref(), s.test)),
                    std::to_string(s.test.size())});
  }
  write_csv(outdir + "/report.csv", {"model", "split", "accuracy", "n"}, rows);

  // Objective/constraint endpoints of the dual-construction trade-off on the
  // test split, with adversarial examples from the configured attack.
  if (cfg.contains("track_attack") && !cfg["track_attack"].is_null() &&
      s.test.size() > 0) {
    const AttackConfig ac = attack_from_cfg(cfg["track_attack"]);
    const Domain dom = domain_of(s.test);
    std::vector<Tensor> normals, advs;
    for (size_t i = 0; i < s.test.size(); ++i) {
      normals.push_back(s.test.examples[i]);
      const auto r =
          run_attack(ac, primal.ref(), s.test.examples[i], s.test.labels[i], dom);
      if (r && r->success) advs.push_back(r->example);
    }
    if (!advs.empty()) {
      const ObjectiveTrack t =
          track_objective(primal.ref(), dual.ref(), normals, advs);
      write_csv(outdir + "/track.csv",
                {"objective_max_normal", "constraint_min_adversarial", "n_adv"},
                {{fd(t.objective), fd(t.constraint), std::to_string(advs.size())}});
    }
  }
  log.line("train-dual done");
}

void cmd_attack(const json& cfg, const std::string& outdir) {
  RunLog log(outdir);
  const std::string primal_path = cfg.value("primal", "");
  require_file(primal_path, "primal checkpoint");
  const AnyClassifier primal = load_checkpoint(primal_path);

  const Dataset full = dataset_from_cfg(cfg.at("dataset"));
  const Splits s = split_from_cfg(full, cfg.at("dataset"));
  const Dataset& ds = s.test.size() > 0 ? s.test : s.train;
  const Domain dom = domain_of(ds);

  const AttackConfig base = attack_from_cfg(cfg.at("attack"));
  // Grid of budget values; empty grid runs the configured budget once.
  std::vector<double> grid;
  if (cfg.contains("grid"))
    for (const auto& g : cfg["grid"]) grid.push_back(g.get<double>());
  if (grid.empty())
    grid.push_back(base.method == "fgsm" || base.method == "bim" ? base.epsilon
                                                                 : base.eta);

  std::vector<std::vector<std::string>> manifest;
  std::vector<std::vector<std::string>> store;
  std::vector<std::vector<std::string>> summary;
  const bool store_examples = cfg.value("store_examples", false);

  for (double budget : grid) {
    AttackConfig ac = base;
    if (ac.method == "fgsm" || ac.method == "bim") {
      ac.epsilon = budget;
      ac.step = cfg["attack"].contains("step") ? ac.step : budget / 4.0;
      if (ac.method == "fgsm") ac.step = budget;
    } else {
      ac.eta = budget;
    }
    std::vector<std::optional<AdversarialResult>> results(ds.size());
    parallel_for(ds.size(), [&](size_t i) {
      results[i] = run_attack(ac, primal.ref(), ds.examples[i], ds.labels[i], dom);
    });
    int successes = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
      const auto& r = results[i];
      if (!r) continue;
      manifest.push_back({std::to_string(ds.ids[i]), ac.method, fd(budget),
                          r->success ? "1" : "0", fd(r->l2), fd(r->linf),
                          std::to_string(r->iterations)});
      successes += r->success ? 1 : 0;
      if (store_examples && r->success) {
        std::vector<std::string> row = {std::to_string(ds.ids[i]), fd(budget)};
        for (std::int64_t q = 0; q < r->example.size(); ++q)
          row.push_back(fd(r->example[q]));
        store.push_back(std::move(row));
      }
    }
    summary.push_back({ac.method, fd(budget),
                       fd(double(successes) / double(ds.size())),
                       std::to_string(ds.size())});
  }
  write_csv(outdir + "/manifest.csv",
            {"id", "method", "budget", "success", "l2", "linf", "iterations"},
            manifest);
  write_csv(outdir + "/summary.csv",
            {"method", "budget", "success_rate", "n"}, summary);
  if (store_examples) {
    std::vector<std::string> header = {"id", "budget"};
    for (int q = 0; q < ds.dim(); ++q) header.push_back("v" + std::to_string(q));
    write_csv(outdir + "/adversarial_store.csv", header, store);
  }
  log.line("attack done");
}

void cmd_train_sid(const json& cfg, const std::string& outdir) {
  RunLog log(outdir);
  require_file(cfg.value("primal", ""), "primal checkpoint");
  require_file(cfg.value("dual", ""), "dual checkpoint");
  const AnyClassifier primal = load_checkpoint(cfg["primal"].get<std::string>());
  const AnyClassifier dual = load_checkpoint(cfg["dual"].get<std::string>());

  const Dataset full = dataset_from_cfg(cfg.at("dataset"));
  const Splits s = split_from_cfg(full, cfg.at("dataset"));
  const Dataset correct = select_correct(
      s.train, [&](const Tensor& x) { return primal.ref().label(x); });
  const Domain dom = domain_of(s.train);

  const AttackConfig ac = attack_from_cfg(cfg.at("attack"));
  const json& sj = cfg.at("sid");
  SidConfig sc;
  sc.hidden = sj.value("hidden", 128);
  sc.epochs = sj.value("epochs", 30);
  sc.batch = sj.value("batch", 64);
  sc.adam.lr = sj.value("lr", 1e-3);
  sc.seed = sj.value("seed", 5);
  sc.concat_features = sj.value("concat_features", false);

  std::vector<std::string> warnings;
  const SidNet net =
      train_sid(primal.ref(), dual.ref(), correct,
                make_attack_fn(ac, primal.ref(), dom), dom, sc, &warnings);
  save_sid(outdir + "/sid.json", net);

  std::vector<std::vector<std::string>> trace;
  for (size_t e = 0; e < net.loss_trace.size(); ++e)
    trace.push_back({std::to_string(e), fd(net.loss_trace[e]),
                     std::to_string(net.class_counts[e][0]),
                     std::to_string(net.class_counts[e][1]),
                     std::to_string(net.class_counts[e][2])});
  write_csv(outdir + "/trace.csv",
            {"epoch", "loss", "n_adversarial", "n_consistent", "n_inconsistent"},
            trace);
  for (const std::string& w : warnings) log.line(w);
  log.line("train-sid done");
}

void cmd_eval_sid(const json& cfg, const std::string& outdir) {
  RunLog log(outdir);
  require_file(cfg.value("primal", ""), "primal checkpoint");
  require_file(cfg.value("dual", ""), "dual checkpoint");
  const AnyClassifier primal = load_checkpoint(cfg["primal"].get<std::string>());
  const AnyClassifier dual = load_checkpoint(cfg["dual"].get<std::string>());

  const Dataset full = dataset_from_cfg(cfg.at("dataset"));
  const Splits s = split_from_cfg(full, cfg.at("dataset"));
  const Dataset heldout = select_correct(
      s.test, [&](const Tensor& x) { return primal.ref().label(x); });
  const Domain dom = domain_of(s.test);
  const std::uint64_t seed = cfg.value("seed", 1);

  std::vector<NamedAttack> targets;
  for (const auto& t : cfg.at("targets")) {
    const AttackConfig ac = attack_from_cfg(t);
    targets.push_back({ac.method, make_attack_fn(ac, primal.ref(), dom)});
  }

  const std::string dsname = full.name;
  const std::string primal_kind = primal.kind();
  std::vector<std::vector<std::string>> table1, table2, table3;
  for (const auto& sid_entry : cfg.at("sids")) {
    const std::string source = sid_entry.at("source").get<std::string>();
    const std::string path = sid_entry.at("path").get<std::string>();
    require_file(path, "sid checkpoint");
    const SidNet net = load_sid(path);
    const auto row =
        cross_attack_eval(net, primal.ref(), dual.ref(), heldout, targets);
    for (const CrossEvalCell& cell : row) {
      const std::vector<std::string> rec = {
          dsname,
          primal_kind,
          source,
          cell.target,
          cell.available ? fd(cell.auc) : "unavailable",
          std::to_string(cell.n_pos),
          std::to_string(cell.n_neg),
          std::to_string(seed)};
      table2.push_back(rec);
      if (cell.target == source) table1.push_back(rec);
    }

    // White-box protocol: A_O on this sid's source attack vs A_W on examples
    // crafted against classifier and detector jointly.
    if (cfg.contains("whitebox") && !cfg["whitebox"].is_null()) {
      const json& wb = cfg["whitebox"];
      const double alpha = wb.value("alpha", 0.1);
      const double eta = wb.value("eta", 0.5);
      const int steps = wb.value("steps", 40);
      const NamedAttack* src_attack = nullptr;
      for (const auto& t : targets)
        if (t.name == source) src_attack = &t;
      if (src_attack) {
        std::vector<double> neg, pos_o, pos_w;
        int fooled_w = 0, fooled_base = 0, n_run = 0;
        for (size_t i = 0; i < heldout.size(); ++i) {
          const Tensor& x = heldout.examples[i];
          neg.push_back(detect(net, primal.ref(), dual.ref(), x).score);
          const auto ro = src_attack->fn(x, heldout.labels[i]);
          if (ro && ro->success)
            pos_o.push_back(detect(net, primal.ref(), dual.ref(), ro->example).score);
          auto aux = [&](Tape& tape, int x_node) {
            int feat;
            if (net.concat_features) {
              const int fl = primal.ref().build_logits(tape, x_node);
              const int gl = dual.ref().build_logits(tape, x_node);
              feat = tape.concat_cols({fl, gl});
            } else {
              feat = tape.sub(primal.ref().build_logits(tape, x_node),
                              dual.ref().build_logits(tape, x_node));
            }
            return tape.cross_entropy(net.build_logits(tape, feat), {0});
          };
          const AdversarialResult rw = whitebox(
              primal.ref(), x, heldout.labels[i], alpha, eta, steps, dom, aux);
          const AdversarialResult rb = pgd_l2(primal.ref(), x, heldout.labels[i],
                                              eta, steps, dom);
          ++n_run;
          fooled_w += rw.success ? 1 : 0;
          fooled_base += rb.success ? 1 : 0;
          if (rw.success)
            pos_w.push_back(detect(net, primal.ref(), dual.ref(), rw.example).score);
        }
        const double a_o = pos_o.empty() ? 0.0 : auc(pos_o, neg);
        const double a_w = pos_w.empty() ? 0.0 : auc(pos_w, neg);
        table3.push_back({source, fd(a_o), fd(a_w),
                          std::to_string(pos_o.size()),
                          std::to_string(pos_w.size()),
                          std::to_string(neg.size()),
                          fd(double(fooled_base) / std::max(1, n_run)),
                          fd(double(fooled_w) / std::max(1, n_run)),
                          std::to_string(seed)});
      }
    }
  }
  const std::vector<std::string> hdr = {"dataset", "primal_model",
                                        "source_attack", "target_attack",
                                        "auc", "n_pos", "n_neg", "seed"};
  write_csv(outdir + "/table1.csv", hdr, table1);
  write_csv(outdir + "/table2.csv", hdr, table2);
  if (!table3.empty())
    write_csv(outdir + "/table3.csv",
              {"source", "a_o", "a_w", "n_pos_original", "n_pos_whitebox",
               "n_neg", "fool_rate_alpha0", "fool_rate_whitebox", "seed"},
              table3);
  log.line("eval-sid done");
}

// ---------------------------------------------------------------------------
// verify-bounds
// ---------------------------------------------------------------------------

void cmd_verify_bounds(const json& cfg, const std::string& outdir) {
  RunLog log(outdir);
  const json& b = cfg.at("bounds");
  const std::uint64_t seed = cfg.value("seed", 1);
  const int p = b.value("dim", 256);
  const int d = static_cast<int>(std::lround(std::sqrt(double(p))));
  if (d * d != p) throw UsageError("verify-bounds: dim must be a perfect square");
  const double eta = b.value("eta", 0.5);

  const WaveletFilter filter = filter_from_cfg(b, "filter");
  const WawtWeights weights;  // uniform quarter weights
  const Mat h = to_eigen(wawt_matrix(d, weights, filter));

  BoundsMixtureConfig bm;
  bm.classes = b.value("classes", 10);
  bm.per_class = b.value("per_class", 100);
  bm.dim = p;
  bm.sigma = b.value("sigma", 0.18);
  bm.sigma_spread = b.value("sigma_spread", 0.05);
  bm.mean_row = b.value("mean_row", 2.5);
  bm.mean_perp_frac = b.value("mean_perp_frac", 0.85);
  bm.bump_scale = b.value("bump_scale", 0.1);
  bm.bump_rank = b.value("bump_rank", 4);
  const auto [ds, true_spec] = make_bounds_mixture(bm, seed, h);

  // Affine pair: LDA on the raw data, LDA on the transformed data. Both use
  // the same sample estimates, making the class-gap identity exact.
  const GaussianMixtureSpec est = estimate_mixture(ds);
  const AffineClassifier f_aff = fit_affine(est);
  DualConfig dc;
  dc.kind = ClassifierKind::kAffine;
  dc.filter = filter;
  DualClassifier g_aff = build_dual(ds, dc);

  // Quadratic pair with shrinkage (100 samples per class in 256 dimensions).
  const double shrink = b.value("qda_shrinkage", 0.5);
  const GaussianMixtureSpec est_q = estimate_mixture(ds, shrink);
  const QuadraticClassifier f_quad = fit_quadratic(est_q);
  DualConfig dq;
  dq.kind = ClassifierKind::kQuadratic;
  dq.filter = filter;
  dq.qda_shrinkage = shrink;
  DualClassifier g_quad = build_dual(ds, dq);

  const int t_points = b.value("t_points", 51);
  const double t_max = b.value("t_max_frac", 1.0);
  std::vector<double> fracs;
  for (int i = 0; i < t_points; ++i)
    fracs.push_back(t_max * i / double(t_points - 1));

  const DeviationCurve aff_curve = monte_carlo_deviation(
      f_aff, g_aff, ds,
      [atk = make_model_attack_affine(est, eta)](const Tensor& x, int label) {
        return std::optional<Tensor>(atk(x, label));
      },
      fracs);
  const DeviationCurve quad_curve = monte_carlo_deviation(
      f_quad, g_quad, ds,
      [atk = make_model_attack_quadratic(est_q, eta)](const Tensor& x, int label) {
        return std::optional<Tensor>(atk(x, label));
      },
      fracs);

  // Reported comparison family: minimal-perturbation attack rescaled to the
  // L2 budget eta.
  const Domain dom = domain_of(ds);
  const DeviationCurve df_curve = monte_carlo_deviation(
      f_aff, g_aff, ds,
      [&](const Tensor& x, int label) -> std::optional<Tensor> {
        const AdversarialResult r = deepfool(f_aff, x, 50, 0.02, dom, label);
        if (r.perturbation.l2_norm() == 0.0) return std::nullopt;
        Tensor out = x;
        const double s = eta / r.perturbation.l2_norm();
        for (std::int64_t i = 0; i < out.size(); ++i)
          out[i] += s * r.perturbation[i];
        return out;
      },
      fracs);

  BoundInput in_aff{h, est, eta, aff_curve.delta};
  BoundInput in_quad{h, est_q, eta, quad_curve.delta};

  std::vector<double> aff_bounds, quad_bounds, cor_bounds;
  for (double frac : fracs) {
    aff_bounds.push_back(affine_bound(in_aff, frac * aff_curve.delta).bound);
    quad_bounds.push_back(quadratic_bound(in_quad, frac * quad_curve.delta).bound);
    cor_bounds.push_back(corollary2_bound(frac * quad_curve.delta,
                                          quad_curve.delta, eta, p));
  }

  auto emit_curve = [&](const std::string& path, const DeviationCurve& c) {
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < fracs.size(); ++i)
      rows.push_back({fd(fracs[i]), fd(aff_bounds[i]), fd(quad_bounds[i]),
                      fd(cor_bounds[i]), fd(c.empirical[i]), fd(c.ci_lo[i]),
                      fd(c.ci_hi[i])});
    write_csv(path,
              {"t_over_delta", "affine_bound", "quadratic_bound",
               "corollary2_bound", "empirical", "ci_low", "ci_high"},
              rows);
  };
  emit_curve(outdir + "/curves.csv", aff_curve);
  emit_curve(outdir + "/curves_quadratic.csv", quad_curve);
  emit_curve(outdir + "/curves_deepfool.csv", df_curve);

  // Verdicts.
  auto at_frac = [&](double target) {
    size_t best = 0;
    for (size_t i = 1; i < fracs.size(); ++i)
      if (std::fabs(fracs[i] - target) < std::fabs(fracs[best] - target))
        best = i;
    return best;
  };
  const size_t i06 = at_frac(0.6);
  const bool pass_95 = aff_bounds[i06] >= 0.95;
  bool aff_monotone = true, quad_monotone = true;
  for (size_t i = 1; i < fracs.size(); ++i) {
    if (aff_bounds[i] > aff_bounds[i - 1] + 1e-12) aff_monotone = false;
    if (quad_bounds[i] > quad_bounds[i - 1] + 1e-12) quad_monotone = false;
  }
  bool aff_dominated = true, quad_dominated = true;
  for (size_t i = 0; i < fracs.size(); ++i) {
    if (aff_curve.empirical[i] < aff_bounds[i] - 2.0 * aff_curve.stderr_[i])
      aff_dominated = false;
    if (quad_curve.empirical[i] < quad_bounds[i] - 2.0 * quad_curve.stderr_[i])
      quad_dominated = false;
  }

  std::vector<std::vector<std::string>> checks;
  auto check = [&](const std::string& name, bool ok, double value) {
    checks.push_back({name, ok ? "PASS" : "FAIL", fd(value)});
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << " (" << fd(value)
              << ")\n";
  };
  check("affine_bound_at_0.6_delta_ge_0.95", pass_95, aff_bounds[i06]);
  check("affine_bound_monotone_decay", aff_monotone, 0.0);
  check("quadratic_bound_monotone_decay", quad_monotone, 0.0);
  check("empirical_dominates_affine_bound_within_2se", aff_dominated,
        aff_curve.delta);
  check("empirical_dominates_quadratic_bound_within_2se", quad_dominated,
        quad_curve.delta);
  write_csv(outdir + "/checks.csv", {"check", "result", "value"}, checks);

  write_csv(outdir + "/deltas.csv",
            {"pair", "delta", "n_adversarial"},
            {{"affine", fd(aff_curve.delta), std::to_string(aff_curve.n_adversarial)},
             {"quadratic", fd(quad_curve.delta),
              std::to_string(quad_curve.n_adversarial)}});
  log.line("verify-bounds done");
}

void cmd_emit_features(const json& cfg, const std::string& outdir) {
  RunLog log(outdir);
  require_file(cfg.value("primal", ""), "primal checkpoint");
  require_file(cfg.value("dual", ""), "dual checkpoint");
  const AnyClassifier primal = load_checkpoint(cfg["primal"].get<std::string>());
  const AnyClassifier dual = load_checkpoint(cfg["dual"].get<std::string>());

  const Dataset full = dataset_from_cfg(cfg.at("dataset"));
  const Splits s = split_from_cfg(full, cfg.at("dataset"));
  const Dataset heldout = select_correct(
      s.test, [&](const Tensor& x) { return primal.ref().label(x); });
  const Domain dom = domain_of(s.test);
  const AttackConfig ac = attack_from_cfg(cfg.at("attack"));
  const std::uint64_t seed = cfg.value("seed", 1);

  std::vector<Vec> feats;
  std::vector<std::string> provenance;
  std::vector<std::int64_t> ids;
  for (size_t i = 0; i < heldout.size(); ++i) {
    const Tensor& x = heldout.examples[i];
    feats.push_back(sensitivity(primal.ref(), dual.ref(), x));
    provenance.push_back("clean");
    ids.push_back(heldout.ids[i]);
    const auto r = run_attack(ac, primal.ref(), x, heldout.labels[i], dom);
    if (r && r->success) {
      feats.push_back(sensitivity(primal.ref(), dual.ref(), r->example));
      provenance.push_back("adversarial");
      ids.push_back(heldout.ids[i]);
      const Tensor noisy = matched_noise(
          x, r->l2, derive_seed(seed, static_cast<std::uint64_t>(heldout.ids[i])),
          dom);
      feats.push_back(sensitivity(primal.ref(), dual.ref(), noisy));
      provenance.push_back("noisy");
      ids.push_back(heldout.ids[i]);
    }
  }

  std::vector<std::string> header = {"id", "provenance"};
  for (int k = 0; k < primal.ref().num_classes(); ++k)
    header.push_back("s" + std::to_string(k));
  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < feats.size(); ++i) {
    std::vector<std::string> row = {std::to_string(ids[i]), provenance[i]};
    for (int k = 0; k < feats[i].size(); ++k) row.push_back(fd(feats[i](k)));
    rows.push_back(std::move(row));
  }
  write_csv(outdir + "/features.csv", header, rows);

  const Projection2d proj = project_features_2d(feats);
  std::vector<std::vector<std::string>> prows;
  for (size_t i = 0; i < feats.size(); ++i)
    prows.push_back({std::to_string(ids[i]), provenance[i],
                     fd(proj.coords(static_cast<Eigen::Index>(i), 0)),
                     fd(proj.coords(static_cast<Eigen::Index>(i), 1))});
  write_csv(outdir + "/projection.csv", {"id", "provenance", "x", "y"}, prows);
  write_csv(outdir + "/projection_info.csv",
            {"var_first", "var_second", "rank_deficient"},
            {{fd(proj.var_first), fd(proj.var_second),
              proj.rank_deficient ? "1" : "0"}});
  log.line("emit-features done");
}

}  // namespace sidlab::cli
