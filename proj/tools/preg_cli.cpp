// Command-line front end: training, μ grid search, theory checks, SBM
// generation and gradient checking. JSON for metrics, CSV for anything
// plotted. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "preg/preg.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const std::map<std::string, preg::ModelKind> kModelNames{
    {"gcn", preg::ModelKind::gcn}, {"mlp", preg::ModelKind::mlp}};
const std::map<std::string, preg::RegKind> kRegNames{
    {"none", preg::RegKind::none},
    {"preg", preg::RegKind::preg},
    {"lap", preg::RegKind::laplacian},
    {"ls", preg::RegKind::label_smoothing},
    {"cp", preg::RegKind::confidence_penalty}};
const std::map<std::string, preg::PhiVariant> kPhiNames{
    {"se", preg::PhiVariant::squared_error},
    {"ce", preg::PhiVariant::cross_entropy},
    {"kl", preg::PhiVariant::kl_divergence}};

std::string phi_name(preg::PhiVariant v) {
  switch (v) {
    case preg::PhiVariant::squared_error: return "se";
    case preg::PhiVariant::cross_entropy: return "ce";
    default: return "kl";
  }
}

json metrics_json(const preg::Metrics& m) {
  json curve = json::array();
  for (const auto& p : m.loss_curve)
    curve.push_back({{"epoch", p.epoch}, {"cls", p.cls}, {"preg", p.reg_term}});
  return json{{"mu", m.mu},
              {"phi", phi_name(m.phi)},
              {"train_acc", m.train_acc},
              {"val_acc", m.val_acc},
              {"test_acc", m.test_acc},
              {"omega", m.omega},
              {"stopped_epoch", m.stopped_epoch},
              {"loss_curve", curve}};
}

void write_text(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << text;
}

// Shared training/config flags. Every subcommand that trains uses this block.
struct TrainFlags {
  std::string data;
  std::string model = "gcn";
  std::string reg = "none";
  std::string phi = "ce";
  double mu = 0.5;
  double unmask_ratio = 1.0;
  bool anneal = false;
  std::optional<double> threshold;
  double ls_alpha = 0.1;
  double cp_beta = 0.1;
  std::uint64_t seed = 0;
  std::string split = "random";
  std::size_t train_per_class = 20;
  std::size_t val_per_class = 30;
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::size_t max_epochs = 2000;
  std::size_t patience = 200;
  double dropout = 0.5;
  std::size_t hidden = 0;
  std::string out = "-";
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_reg_choice) {
  cmd->add_option("--data", f.data, "dataset directory (edges.tsv, features.txt, labels.txt)")
      ->required();
  cmd->add_option("--model", f.model, "model kind")
      ->check(CLI::IsMember({"gcn", "mlp"}))
      ->capture_default_str();
  if (with_reg_choice)
    cmd->add_option("--reg", f.reg, "regularizer kind")
        ->check(CLI::IsMember({"none", "preg", "lap", "ls", "cp"}))
        ->capture_default_str();
  cmd->add_option("--phi", f.phi, "P-reg disagreement measure")
      ->check(CLI::IsMember({"se", "ce", "kl"}))
      ->capture_default_str();
  if (with_reg_choice)
    cmd->add_option("--mu", f.mu, "regularization factor")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
  cmd->add_option("--unmask-ratio", f.unmask_ratio, "fraction of nodes P-reg applies to")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_flag("--anneal", f.anneal, "anneal mu toward 1 over epochs (needs 0 < mu < 1)");
  cmd->add_option("--threshold", f.threshold, "hinge threshold tau on the P-reg value")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--ls-alpha", f.ls_alpha, "label smoothing factor")
      ->check(CLI::Range(0.0, 0.999999))
      ->capture_default_str();
  cmd->add_option("--cp-beta", f.cp_beta, "confidence penalty weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "run seed")->capture_default_str();
  cmd->add_option("--split", f.split, "random per-class split or *_idx.txt files in --data")
      ->check(CLI::IsMember({"random", "files"}))
      ->capture_default_str();
  cmd->add_option("--train-per-class", f.train_per_class, "train nodes per class")
      ->capture_default_str();
  cmd->add_option("--val-per-class", f.val_per_class, "validation nodes per class")
      ->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--weight-decay", f.weight_decay, "coupled L2 weight decay")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--max-epochs", f.max_epochs, "epoch cap")->capture_default_str();
  cmd->add_option("--patience", f.patience, "early stopping patience")->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "dropout probability after ReLU")
      ->check(CLI::Range(0.0, 0.999999))
      ->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "hidden width (0 = model default)")
      ->capture_default_str();
  cmd->add_option("--out", f.out, "output file ('-' = stdout)")->capture_default_str();
}

std::vector<std::size_t> read_index_file(const fs::path& file) {
  std::vector<std::size_t> out;
  for (const auto& [no, line] : preg::detail::content_lines(file))
    out.push_back(preg::detail::parse_index(line, file, no));
  return out;
}

preg::TrainConfig make_config(const TrainFlags& f, const preg::Dataset& data) {
  preg::TrainConfig cfg;
  cfg.model = kModelNames.at(f.model);
  cfg.reg.kind = kRegNames.at(f.reg);
  cfg.reg.phi = kPhiNames.at(f.phi);
  cfg.reg.mu = f.mu;
  cfg.reg.unmask_ratio = f.unmask_ratio;
  cfg.reg.anneal = f.anneal;
  cfg.reg.threshold = f.threshold;
  cfg.reg.ls_alpha = f.ls_alpha;
  cfg.reg.cp_beta = f.cp_beta;
  cfg.lr = f.lr;
  cfg.weight_decay = f.weight_decay;
  cfg.max_epochs = f.max_epochs;
  cfg.patience = f.patience;
  cfg.seed = f.seed;
  cfg.hidden = f.hidden;
  cfg.dropout_p = f.dropout;
  cfg.train_per_class = f.train_per_class;
  cfg.val_per_class = f.val_per_class;
  if (f.split == "files") {
    preg::SplitSpec s;
    s.train_idx = read_index_file(fs::path(f.data) / "train_idx.txt");
    s.val_idx = read_index_file(fs::path(f.data) / "val_idx.txt");
    s.test_idx = read_index_file(fs::path(f.data) / "test_idx.txt");
    cfg.split = std::move(s);
  }
  if (cfg.reg.anneal) {
    if (cfg.reg.kind != preg::RegKind::preg || !(f.mu > 0.0 && f.mu < 1.0))
      throw CLI::ValidationError("--anneal requires --reg preg and 0 < --mu < 1");
  }
  return cfg;
}

std::string csv_rows(const std::vector<std::array<double, 3>>& rows) {
  std::ostringstream os;
  os << "step,value,dispersion\n";
  for (const auto& r : rows)
    os << preg::detail::format_double(r[0]) << ',' << preg::detail::format_double(r[1]) << ','
       << preg::detail::format_double(r[2]) << '\n';
  return os.str();
}

preg::DenseMatrix random_logits(std::size_t n, std::size_t c, std::uint64_t seed) {
  preg::Rng rng(preg::derive_seed(seed, preg::Stream::init));
  preg::DenseMatrix z(n, c);
  for (double& v : z.data) v = rng.normal();
  return z;
}

int cmd_train(const TrainFlags& f) {
  const preg::Dataset data = preg::load_dataset(f.data);
  const preg::TrainConfig cfg = make_config(f, data);
  const preg::Metrics metrics = preg::train(cfg, data).second;
  write_text(f.out, metrics_json(metrics).dump(2) + "\n");
  return 0;
}

int cmd_gridsearch(const TrainFlags& f) {
  const preg::Dataset data = preg::load_dataset(f.data);
  TrainFlags ff = f;
  ff.reg = "preg";
  const preg::TrainConfig cfg = make_config(ff, data);
  const auto [best_mu, runs] = preg::grid_search_mu(cfg, preg::default_mu_grid(), data);
  json out{{"chosen_mu", best_mu}, {"runs", json::array()}};
  for (const auto& m : runs) out["runs"].push_back(metrics_json(m));
  write_text(f.out, out.dump(2) + "\n");
  return 0;
}

struct AnalyzeFlags {
  TrainFlags train;
  std::string check;
  bool self_loops = false;
  double tol = 1e-8;
  std::size_t max_iter = 10000;
  double descent_lr = 0.1;
  std::size_t steps = 2000;
};

int cmd_analyze(const AnalyzeFlags& a) {
  const TrainFlags& f = a.train;
  const preg::Dataset data = preg::load_dataset(f.data);
  const preg::Graph& g = data.graph;
  const std::size_t C = data.num_classes;
  std::vector<std::array<double, 3>> rows;

  if (a.check == "theorem1") {
    const preg::DenseMatrix z = random_logits(g.num_nodes, C, f.seed);
    rows.push_back({0.0, preg::theorem1_residual(g, z), preg::row_dispersion(z)});
  } else if (a.check == "infinite-gcn") {
    const preg::Graph gg =
        a.self_loops ? preg::build_graph(preg::edge_list(g), g.num_nodes, true) : g;
    if (!preg::is_connected(gg))
      throw std::runtime_error("analyze: infinite-gcn needs a connected graph");
    preg::DenseMatrix z = random_logits(gg.num_nodes, C, f.seed);
    const preg::SparseOperator op = preg::normalize_adjacency(gg, preg::NormMode::row);
    for (std::size_t it = 0; it <= a.max_iter; ++it) {
      const double d = preg::row_dispersion(z);
      rows.push_back({static_cast<double>(it), d, d});
      if (d < a.tol || it == a.max_iter) break;
      z = preg::spmm(op, z);
    }
  } else if (a.check == "preg-descent") {
    const preg::DenseMatrix z0 = random_logits(g.num_nodes, C, f.seed);
    const preg::DescentReport rep =
        preg::minimize_preg_descent(g, z0, kPhiNames.at(f.phi), a.descent_lr, a.steps);
    for (std::size_t s = 0; s < rep.value_trace.size(); ++s)
      rows.push_back({static_cast<double>(s), rep.value_trace[s], rep.dispersion_trace[s]});
  } else if (a.check == "omega") {
    const preg::Metrics m = preg::train(make_config(f, data), data).second;
    rows.push_back({0.0, m.omega, 0.0});
  } else if (a.check == "masked-sweep") {
    TrainFlags ff = f;
    ff.reg = "preg";
    for (int k = 0; k <= 10; ++k) {
      ff.unmask_ratio = 0.1 * k;
      const preg::Metrics m = preg::train(make_config(ff, data), data).second;
      rows.push_back({static_cast<double>(k), m.test_acc, m.omega});
    }
  } else if (a.check == "mu-sweep") {
    TrainFlags ff = f;
    ff.reg = "preg";
    for (int k = 0; k <= 20; ++k) {
      ff.mu = 0.05 * k;
      const preg::Metrics m = preg::train(make_config(ff, data), data).second;
      rows.push_back({static_cast<double>(k), m.test_acc, m.omega});
    }
  }
  write_text(f.out, csv_rows(rows));
  return 0;
}

struct SbmFlags {
  preg::SbmConfig cfg;
  bool connected = false;
  std::string out;
};

int cmd_gen_sbm(const SbmFlags& s) {
  const preg::Dataset data = preg::generate_sbm(s.cfg, s.connected);
  preg::write_dataset(data, s.out);
  const json j{{"blocks", s.cfg.blocks},
               {"nodes_per_block", s.cfg.nodes_per_block},
               {"p_in", s.cfg.p_in},
               {"p_out", s.cfg.p_out},
               {"feature_dim", s.cfg.feature_dim},
               {"center_separation", s.cfg.center_separation},
               {"feature_noise_sd", s.cfg.feature_noise_sd},
               {"seed", s.cfg.seed},
               {"connected", s.connected}};
  std::ofstream f(fs::path(s.out) / "sbm_config.json", std::ios::binary);
  f << j.dump(2) << "\n";
  return 0;
}

// Finite-difference check of the composite loss through the model parameters
// for every regularizer kind × φ × model on a small generated instance.
int cmd_gradcheck(std::size_t nodes, std::uint64_t seed) {
  preg::SbmConfig scfg;
  scfg.blocks = 2;
  scfg.nodes_per_block = std::max<std::size_t>(2, nodes / 2);
  scfg.p_in = 0.6;
  scfg.p_out = 0.2;
  scfg.feature_dim = 4;
  scfg.seed = seed;
  const preg::Dataset data = preg::generate_sbm(scfg, true);

  preg::SplitSpec split;
  for (std::size_t i = 0; i < data.graph.num_nodes; ++i)
    (i % 2 ? split.val_idx : split.train_idx).push_back(i);
  const preg::SparseOperator preg_op = preg::normalize_adjacency(data.graph, preg::NormMode::row);
  const preg::SparseOperator preg_op_t = preg::transpose(preg_op);
  const std::vector<std::size_t> unmask = preg::eligible_nodes(data.graph);

  bool ok = true;
  for (const auto& [model_name, model] : kModelNames) {
    const preg::SparseOperator op = preg::normalize_adjacency(
        data.graph, model == preg::ModelKind::gcn ? preg::NormMode::symmetric
                                                  : preg::NormMode::row);
    const preg::SparseOperator op_t = preg::transpose(op);
    for (const auto& [reg_name, kind] : kRegNames) {
      for (const auto& [phi_str, variant] : kPhiNames) {
        preg::RegSpec reg;
        reg.kind = kind;
        reg.phi = variant;
        reg.mu = 0.7;
        preg::Rng init(preg::derive_seed(seed, preg::Stream::init));
        preg::ModelParams params = preg::init_params(model, scfg.feature_dim, 8,
                                                     data.num_classes, init);
        auto loss_of = [&](const preg::ModelParams& p) {
          preg::Rng dummy(0);
          const auto z = preg::model_forward(p, data.features, op, 0.0, false, dummy).first;
          return preg::composite_loss(z, data.labels, split, reg, data.graph, &preg_op,
                                      &preg_op_t, unmask);
        };
        const preg::CompositeParts parts = loss_of(params);
        preg::Rng dummy(0);
        const auto cache =
            preg::model_forward(params, data.features, op, 0.0, false, dummy).second;
        const preg::ParamGrads analytic =
            preg::model_backward(params, cache, data.features, op_t, parts.dZ);
        preg::Rng pick(preg::derive_seed(seed, preg::Stream::unmask));
        const double err = preg::finite_diff_gradcheck(
            [&] { return loss_of(params).value; }, params, analytic, 1e-5, 400, pick);
        std::printf("%-3s %-4s %-2s max_rel_err %.3e\n", model_name.c_str(), reg_name.c_str(),
                    phi_str.c_str(), err);
        ok = ok && err < 1e-5;
      }
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Propagation-regularized graph learning toolkit"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train one model and emit metrics JSON");
  add_train_flags(train_cmd, train_flags, true);

  TrainFlags grid_flags;
  CLI::App* grid_cmd =
      app.add_subcommand("gridsearch", "train across the mu grid, select by validation accuracy");
  add_train_flags(grid_cmd, grid_flags, false);

  AnalyzeFlags analyze_flags;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "theory checks and sweeps, CSV output");
  add_train_flags(analyze_cmd, analyze_flags.train, true);
  analyze_cmd->add_option("--check", analyze_flags.check, "which check to run")
      ->required()
      ->check(CLI::IsMember(
          {"theorem1", "infinite-gcn", "preg-descent", "omega", "masked-sweep", "mu-sweep"}));
  analyze_cmd->add_flag("--self-loops", analyze_flags.self_loops,
                        "add self-loops before propagation (infinite-gcn)");
  analyze_cmd->add_option("--tol", analyze_flags.tol, "convergence tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  analyze_cmd->add_option("--max-iter", analyze_flags.max_iter, "propagation iteration cap")
      ->capture_default_str();
  analyze_cmd->add_option("--descent-lr", analyze_flags.descent_lr, "descent step size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  analyze_cmd->add_option("--steps", analyze_flags.steps, "descent step count")
      ->capture_default_str();

  SbmFlags sbm_flags;
  CLI::App* sbm_cmd = app.add_subcommand("gen-sbm", "generate a stochastic block model dataset");
  sbm_cmd->add_option("--blocks", sbm_flags.cfg.blocks, "number of blocks")
      ->capture_default_str();
  sbm_cmd->add_option("--nodes-per-block", sbm_flags.cfg.nodes_per_block, "nodes per block")
      ->capture_default_str();
  sbm_cmd->add_option("--p-in", sbm_flags.cfg.p_in, "intra-block edge probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sbm_cmd->add_option("--p-out", sbm_flags.cfg.p_out, "inter-block edge probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sbm_cmd->add_option("--feature-dim", sbm_flags.cfg.feature_dim, "feature dimension")
      ->capture_default_str();
  sbm_cmd->add_option("--separation", sbm_flags.cfg.center_separation, "block center separation")
      ->capture_default_str();
  sbm_cmd->add_option("--noise", sbm_flags.cfg.feature_noise_sd, "feature noise stddev")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sbm_cmd->add_option("--seed", sbm_flags.cfg.seed, "generation seed")->capture_default_str();
  sbm_cmd->add_flag("--connected", sbm_flags.connected, "retry seeds until connected");
  sbm_cmd->add_option("--out", sbm_flags.out, "output dataset directory")->required();

  std::size_t gc_nodes = 10;
  std::uint64_t gc_seed = 0;
  CLI::App* gc_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every regularizer/model combination");
  gc_cmd->add_option("--nodes", gc_nodes, "instance size")->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed, "instance seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags);
    if (*grid_cmd) return cmd_gridsearch(grid_flags);
    if (*analyze_cmd) return cmd_analyze(analyze_flags);
    if (*sbm_cmd) return cmd_gen_sbm(sbm_flags);
    if (*gc_cmd) return cmd_gradcheck(gc_nodes, gc_seed);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
