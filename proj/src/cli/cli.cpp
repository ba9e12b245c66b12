#include "mtvrp/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtvrp/core/generate.hpp"
#include "mtvrp/core/io.hpp"
#include "mtvrp/eval/cvrplib.hpp"
#include "mtvrp/eval/evaluate.hpp"
#include "mtvrp/eval/solvers.hpp"
#include "mtvrp/policy/checkpoint.hpp"
#include "mtvrp/training/gradcheck.hpp"
#include "mtvrp/training/rollout.hpp"
#include "mtvrp/training/trainer.hpp"

namespace mtvrp::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string workdir = ".";
  std::string config;
  bool json = false;
  int jobs = 0;
};

// Optional overrides of the pipeline configuration; unset fields keep the config-file value.
struct TrainFlags {
  std::optional<std::uint64_t> seed;
  std::optional<int> n, epochs, instances, batch, starts;
  std::optional<double> lr, lora_beta;
  std::optional<int> d_model, n_heads, n_layers, d_ff, rank_frozen, rank_free;
  std::optional<std::string> activation, routing, expert_kind;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--seed", f.seed, "Global seed")->required();
  app->add_option("--n", f.n, "Customers per training instance");
  app->add_option("--epochs", f.epochs);
  app->add_option("--instances-per-epoch", f.instances);
  app->add_option("--batch-size", f.batch);
  app->add_option("--starts", f.starts, "Multi-start trajectories per instance");
  app->add_option("--lr", f.lr);
}

void add_model_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--d-model", f.d_model);
  app->add_option("--n-heads", f.n_heads);
  app->add_option("--n-layers", f.n_layers);
  app->add_option("--d-ff", f.d_ff);
  app->add_option("--rank-frozen", f.rank_frozen);
  app->add_option("--rank-free", f.rank_free);
  app->add_option("--expert-kind", f.expert_kind, "gated | standard");
}

void add_gating_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--activation", f.activation, "softmax | norm_softplus | sigmoid");
  app->add_option("--routing", f.routing, "dense | variant_topk | variant_exact");
}

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  Globals g;

  fs::path path(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : fs::path(g.workdir) / q;
  }

  int jobs() const {
    if (g.jobs > 0) return g.jobs;
    return std::max(1u, std::thread::hardware_concurrency());
  }

  training::PipelineConfig pipeline(const TrainFlags& f) const {
    training::PipelineConfig cfg;
    if (!g.config.empty()) {
      try {
        cfg = training::parse_config(read_text_file(path(g.config)));
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
    auto& t = cfg.train;
    auto& m = cfg.model;
    if (f.seed) t.seed = *f.seed;
    if (f.n) t.n = *f.n;
    if (f.epochs) t.epochs = *f.epochs;
    if (f.instances) t.instances_per_epoch = *f.instances;
    if (f.batch) t.batch_size = *f.batch;
    if (f.starts) t.starts = *f.starts;
    if (f.lr) t.lr = *f.lr;
    t.jobs = jobs();
    if (f.d_model) m.d_model = *f.d_model;
    if (f.n_heads) m.n_heads = *f.n_heads;
    if (f.n_layers) m.n_layers = *f.n_layers;
    if (f.d_ff) m.d_ff = *f.d_ff;
    if (f.rank_frozen) m.rank_frozen = *f.rank_frozen;
    if (f.rank_free) m.rank_free = *f.rank_free;
    try {
      if (f.activation) m.activation = policy::parse_activation(*f.activation);
      if (f.routing) m.routing = policy::parse_routing(*f.routing);
      if (f.expert_kind) m.expert_kind = policy::parse_expert_kind(*f.expert_kind);
      training::validate(t);
      policy::validate(m);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }

  training::MetricsSink metrics_sink(const std::string& file) {
    const fs::path p = path(file);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return [this, p](const training::EpochMetrics& m) {
      std::ofstream os(p, std::ios::app);
      if (!os) throw std::runtime_error("cannot append to " + p.string());
      os << training::metrics_json_line(m) << '\n';
      err_ << m.stage << " epoch " << m.epoch << " loss " << m.loss << " lr " << m.lr;
      for (const auto& [k, v] : m.mean_cost) err_ << " cost[" << k << "] " << v;
      err_ << " (" << m.wall_time << " s)\n";
    };
  }

  void save(const policy::Policy& p, const std::string& file) {
    const fs::path dst = path(file);
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    policy::save_checkpoint(p, dst);
    out_ << "wrote " << dst.string() << '\n';
  }

  policy::Policy load(const std::string& file) {
    const fs::path p = path(file);
    if (!fs::exists(p)) throw std::runtime_error("checkpoint not found: " + p.string());
    return policy::load_checkpoint(p);
  }

  static Variant variant_arg(const std::string& s) {
    try {
      return Variant::parse(s);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }

  // --- commands ---

  int gen(int n, const std::string& variant, int count, std::uint64_t seed, const std::string& out_dir) {
    if (n < 1 || count < 0) throw UsageError("--n must be >= 1 and --count >= 0");
    std::vector<Variant> variants;
    if (variant == "all") {
      variants = all_variants();
    } else {
      variants.push_back(variant_arg(variant));
    }
    const fs::path dir = path(out_dir);
    fs::create_directories(dir);
    std::vector<DatasetEntry> entries;
    std::vector<std::pair<fs::path, const ProblemInstance*>> todo;
    std::vector<ProblemInstance> instances(variants.size() * static_cast<std::size_t>(count));
    training::parallel_for(static_cast<int>(instances.size()), jobs(), [&](int k) {
      const Variant v = variants[k / count];
      const int i = k % count;
      const std::uint64_t vseed = Rng::derive(seed, {static_cast<std::uint64_t>(v.bits())}).next();
      instances[k] = sample_instance(n, v, instance_seed(vseed, static_cast<std::uint64_t>(i)));
    });
    for (std::size_t k = 0; k < instances.size(); ++k) {
      const Variant v = instances[k].variant;
      char name[64];
      std::snprintf(name, sizeof name, "%s-%04d.json", v.name().c_str(), static_cast<int>(k % count));
      write_text_file(dir / name, serialize_instance(instances[k]));
      entries.push_back(DatasetEntry{v, name});
    }
    write_text_file(dir / "manifest.txt", serialize_manifest(entries));
    out_ << "wrote " << entries.size() << " instances to " << dir.string() << '\n';
    return kExitOk;
  }

  int pretrain(const TrainFlags& f, const std::string& out, const std::string& metrics) {
    const auto cfg = pipeline(f);
    save(training::pretrain_backbone(cfg.model, cfg.train, metrics_sink(metrics)), out);
    return kExitOk;
  }

  int finetune(const TrainFlags& f, const std::string& backbone, const std::string& variant, const std::string& out,
               const std::string& metrics) {
    const auto cfg = pipeline(f);
    const Variant v = variant_arg(variant);
    if (v.basis_set().size() != 2) throw UsageError("--variant must be OVRP, VRPB, VRPL or VRPTW");
    policy::Policy bb = load(backbone);
    try {
      if (!g.config.empty()) bb.set_expert_kind(cfg.model.expert_kind, cfg.model.lora_beta);
      if (f.expert_kind || f.lora_beta) {
        bb.set_expert_kind(f.expert_kind ? cfg.model.expert_kind : bb.config().expert_kind,
                           f.lora_beta ? *f.lora_beta : bb.config().lora_beta);
      }
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    save(training::finetune_expert(bb, v, cfg.train, metrics_sink(metrics)), out);
    return kExitOk;
  }

  int aggregate(const TrainFlags& f, const std::string& backbone, const std::vector<std::string>& experts,
                const std::string& out, const std::string& metrics) {
    const auto cfg = pipeline(f);
    policy::Policy bb = load(backbone);
    if (f.activation || f.routing || !g.config.empty()) bb.set_gating(cfg.model.activation, cfg.model.routing);
    std::vector<policy::Policy> ex;
    for (const auto& e : experts) ex.push_back(load(e));
    try {
      save(training::train_unified(bb, ex, cfg.train, metrics_sink(metrics)), out);
    } catch (const std::invalid_argument& e) {
      throw CheckFailed(e.what());
    }
    return kExitOk;
  }

  int eval(const std::string& ckpt, const std::string& solver, const std::string& data, const std::string& cvrplib,
           int aug, int starts, const std::string& out, const std::string& format, const std::string& reference,
           const std::string& timing, bool gates, const std::string& tours_dir, const TrainFlags& f) {
    eval::EvalOptions opt;
    opt.aug = aug;
    opt.starts = starts;
    opt.jobs = jobs();
    opt.gate_stats = gates;
    if (aug != 1 && aug != 8) throw UsageError("--aug must be 1 or 8");
    if (starts < 1) throw UsageError("--starts must be >= 1");
    if (timing != "on" && timing != "off") throw UsageError("--timing must be on or off");
    opt.timing = timing == "on";
    static const std::map<std::string, eval::Reference> refs = {{"auto", eval::Reference::automatic},
                                                                 {"exhaustive", eval::Reference::exhaustive},
                                                                 {"nearest", eval::Reference::nearest_feasible},
                                                                 {"none", eval::Reference::none}};
    if (!refs.count(reference)) throw UsageError("--reference must be auto, exhaustive, nearest or none");
    opt.reference = refs.at(reference);
    if (format != "table" && format != "csv") throw UsageError("--format must be table or csv");
    if (ckpt.empty() == solver.empty()) throw UsageError("give exactly one of --ckpt and --solver");
    if (data.empty() == cvrplib.empty()) throw UsageError("give exactly one of --data and --cvrplib");

    std::vector<ProblemInstance> instances;
    std::vector<std::string> names;
    double cost_scale = 1.0;
    if (!data.empty()) {
      Dataset ds = load_dataset(path(data));
      instances = std::move(ds.instances);
      names = std::move(ds.names);
    } else {
      const auto parsed = eval::parse_cvrplib(read_text_file(path(cvrplib)));
      instances.push_back(parsed.instance);
      names.push_back(parsed.name.empty() ? "cvrplib" : parsed.name);
      cost_scale = parsed.scale;
    }

    eval::EvalReport rep;
    if (!solver.empty()) {
      if (solver != "nearest" && solver != "exhaustive") throw UsageError("--solver must be nearest or exhaustive");
      rep = eval::evaluate_solver(solver == "nearest" ? eval::Solver::nearest_feasible : eval::Solver::exhaustive,
                                  instances, opt);
    } else {
      policy::Policy p = load(ckpt);
      if (f.activation || f.routing) {
        try {
          p.set_gating(f.activation ? policy::parse_activation(*f.activation) : p.config().activation,
                       f.routing ? policy::parse_routing(*f.routing) : p.config().routing);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      rep = eval::evaluate(p, instances, opt);
    }
    if (!cvrplib.empty()) {
      out_ << names[0] << ": cost " << rep.instances[0].cost << " (unit square), "
           << rep.instances[0].cost * cost_scale << " (file units)\n";
    }
    if (!tours_dir.empty()) {
      const fs::path dir = path(tours_dir);
      fs::create_directories(dir);
      for (std::size_t i = 0; i < rep.instances.size(); ++i) {
        write_text_file(dir / tour_file_name(names[i]), serialize_tour(instances[i], rep.instances[i].tour));
      }
    }
    const std::string text = eval::emit_report(rep, format == "csv" ? eval::ReportFormat::csv
                                                                     : eval::ReportFormat::table);
    const std::string js = eval::report_json(rep);
    if (!out.empty()) {
      const fs::path dst = path(out);
      if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
      write_text_file(dst, dst.extension() == ".json" ? js : text);
    }
    out_ << (g.json ? js : text);
    if (rep.invalid_tours > 0) {
      err_ << rep.invalid_tours << " instance(s) produced an invalid tour\n";
      return kExitFailure;
    }
    return kExitOk;
  }

  static std::string tour_file_name(const std::string& instance_name) {
    std::string stem = fs::path(instance_name).stem().string();
    return stem + ".tour.json";
  }

  int validate(const std::string& instance, const std::string& tour, const std::string& data,
               const std::string& tours) {
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (!instance.empty() || !tour.empty()) {
      if (instance.empty() || tour.empty() || !data.empty() || !tours.empty()) {
        throw UsageError("use either --instance with --tour, or --data with --tours");
      }
      pairs.emplace_back(path(instance), path(tour));
    } else {
      if (data.empty() || tours.empty()) throw UsageError("use either --instance with --tour, or --data with --tours");
      const fs::path dir = path(data);
      for (const auto& e : parse_manifest(read_text_file(dir / "manifest.txt"))) {
        pairs.emplace_back(dir / e.path, path(tours) / tour_file_name(e.path));
      }
    }
    int failures = 0;
    nlohmann::ordered_json js = nlohmann::ordered_json::array();
    for (const auto& [ip, tp] : pairs) {
      const ProblemInstance inst = parse_instance(read_text_file(ip));
      std::string problem;
      ValidationReport rep;
      TourFile tf;
      try {
        tf = parse_tour(read_text_file(tp));
      } catch (const std::exception& e) {
        problem = e.what();
      }
      if (problem.empty()) {
        rep = validate_tour(inst, tf.tour);
        if (tf.instance_hash != instance_hash(inst)) {
          problem = "tour was produced for a different instance";
        } else if (!rep.ok()) {
          problem = rep.summary();
        } else if (std::abs(tour_cost(inst, tf.tour) - tf.tour.cost) > 1e-9 * std::max(1.0, tf.tour.cost)) {
          problem = "recorded cost disagrees with the tour";
        }
      }
      const bool ok = problem.empty();
      if (!ok) ++failures;
      if (g.json) {
        js.push_back({{"instance", ip.string()}, {"tour", tp.string()}, {"ok", ok}, {"detail", problem}});
      } else {
        out_ << (ok ? "ok    " : "FAIL  ") << tp.string();
        if (!ok) out_ << "\n" << problem;
        out_ << '\n';
      }
    }
    if (g.json) out_ << js.dump(2) << '\n';
    return failures ? kExitFailure : kExitOk;
  }

  int gradcheck(std::uint64_t seed, int d_model, int n, int entries, double h) {
    training::GradcheckOptions opt;
    opt.h = h;
    opt.seed = seed;
    opt.d_model = d_model;
    opt.n = n;
    opt.entries_per_tensor = entries;
    const auto cases = training::policy_gradcheck_suite(opt);
    double worst = 0.0;
    nlohmann::ordered_json js = nlohmann::ordered_json::array();
    for (const auto& c : cases) {
      worst = std::max(worst, c.max_rel_error);
      if (g.json) {
        js.push_back({{"case", c.name},
                      {"max_rel_error", c.max_rel_error},
                      {"worst_tensor", c.worst_tensor},
                      {"tensors", c.tensors},
                      {"entries", c.entries}});
      } else {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-28s max rel error %.3e  (%d tensors, %d entries; worst %s)\n",
                      c.name.c_str(), c.max_rel_error, c.tensors, c.entries, c.worst_tensor.c_str());
        out_ << buf;
      }
    }
    if (g.json) {
      out_ << js.dump(2) << '\n';
    } else {
      char buf[64];
      std::snprintf(buf, sizeof buf, "max relative error: %.3e\n", worst);
      out_ << buf;
    }
    return worst < 1e-4 ? kExitOk : kExitFailure;
  }

  int report(const std::string& input, const std::string& format) {
    if (format != "table" && format != "csv") throw UsageError("--format must be table or csv");
    const auto j = nlohmann::json::parse(read_text_file(path(input)));
    eval::EvalReport rep;
    try {
      rep.invalid_tours = j.at("invalid_tours").get<int>();
      for (const auto& r : j.at("rows")) {
        eval::VariantRow row;
        row.variant = r.at("variant").get<std::string>();
        row.count = r.at("count").get<int>();
        row.mean_cost = r.at("mean_cost").get<double>();
        row.mean_gap = r.at("mean_gap").is_null() ? std::nan("") : r.at("mean_gap").get<double>();
        row.wall_time = r.at("wall_time").get<double>();
        row.reference = r.at("reference").get<std::string>();
        if (r.contains("gate_mean")) row.gate_mean = r.at("gate_mean").get<std::array<double, 5>>();
        rep.rows.push_back(row);
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("not an evaluation report: ") + e.what());
    }
    out_ << (g.json ? eval::report_json(rep)
                    : eval::emit_report(rep, format == "csv" ? eval::ReportFormat::csv : eval::ReportFormat::table));
    if (format == "table" && !g.json) {
      for (const auto& r : rep.rows) {
        if (!r.gate_mean) continue;
        char buf[160];
        std::snprintf(buf, sizeof buf, "gates %-9s C %.3f  O %.3f  B %.3f  L %.3f  TW %.3f\n", r.variant.c_str(),
                      (*r.gate_mean)[0], (*r.gate_mean)[1], (*r.gate_mean)[2], (*r.gate_mean)[3], (*r.gate_mean)[4]);
        out_ << buf;
      }
    }
    return kExitOk;
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Runner r(out, err);
  CLI::App app{"Multi-task VRP solver with mixtures of specialised LoRA experts", "mtvrp"};
  app.require_subcommand(1);
  app.add_option("--workdir", r.g.workdir, "Base directory for relative paths");
  app.add_option("--config", r.g.config, "JSON pipeline config; explicit flags take precedence");
  app.add_flag("--json", r.g.json, "Print machine-readable output");
  app.add_option("--jobs", r.g.jobs, "Worker threads (default: available cores)");

  std::function<int()> action;

  // gen
  int gen_n = 0, gen_count = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_variant, gen_out;
  auto* gen = app.add_subcommand("gen", "Generate instances");
  gen->add_option("--n", gen_n, "Customers per instance")->required();
  gen->add_option("--variant", gen_variant, "Variant name or 'all'")->required();
  gen->add_option("--count", gen_count, "Instances per variant")->required();
  gen->add_option("--seed", gen_seed)->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->callback([&] { action = [&] { return r.gen(gen_n, gen_variant, gen_count, gen_seed, gen_out); }; });

  // pretrain
  TrainFlags pre_f;
  std::string pre_out = "backbone.bin", pre_metrics = "metrics/backbone.jsonl";
  auto* pre = app.add_subcommand("pretrain", "Stage 1: train the backbone on CVRP");
  add_train_flags(pre, pre_f);
  add_model_flags(pre, pre_f);
  add_gating_flags(pre, pre_f);
  pre->add_option("--out", pre_out, "Checkpoint path")->capture_default_str();
  pre->add_option("--metrics", pre_metrics, "Metrics file (appended)")->capture_default_str();
  pre->callback([&] { action = [&] { return r.pretrain(pre_f, pre_out, pre_metrics); }; });

  // finetune
  TrainFlags ft_f;
  std::string ft_backbone, ft_variant, ft_out, ft_metrics;
  auto* ft = app.add_subcommand("finetune", "Stage 2: fine-tune one basis expert");
  add_train_flags(ft, ft_f);
  ft->add_option("--backbone", ft_backbone, "Backbone checkpoint")->required();
  ft->add_option("--variant", ft_variant, "OVRP | VRPB | VRPL | VRPTW")->required();
  ft->add_option("--expert-kind", ft_f.expert_kind, "gated | standard (default: as recorded in the backbone)");
  ft->add_option("--lora-beta", ft_f.lora_beta, "Scale of the standard LoRA delta, in (0, 1]");
  ft->add_option("--out", ft_out, "Checkpoint path (default expert-<variant>.bin)");
  ft->add_option("--metrics", ft_metrics, "Metrics file (default metrics/expert-<variant>.jsonl)");
  ft->callback([&] {
    action = [&] {
      const std::string out = ft_out.empty() ? "expert-" + ft_variant + ".bin" : ft_out;
      const std::string met = ft_metrics.empty() ? "metrics/expert-" + ft_variant + ".jsonl" : ft_metrics;
      return r.finetune(ft_f, ft_backbone, ft_variant, out, met);
    };
  });

  // aggregate
  TrainFlags ag_f;
  std::string ag_backbone, ag_out = "unified.bin", ag_metrics = "metrics/unified.jsonl";
  std::vector<std::string> ag_experts;
  auto* ag = app.add_subcommand("aggregate", "Stage 3: train the gated mixture of experts");
  add_train_flags(ag, ag_f);
  add_gating_flags(ag, ag_f);
  ag->add_option("--backbone", ag_backbone, "Backbone checkpoint")->required();
  ag->add_option("--experts", ag_experts, "The four expert checkpoints")->required()->expected(4)->delimiter(',');
  ag->add_option("--out", ag_out, "Checkpoint path")->capture_default_str();
  ag->add_option("--metrics", ag_metrics, "Metrics file (appended)")->capture_default_str();
  ag->callback([&] { action = [&] { return r.aggregate(ag_f, ag_backbone, ag_experts, ag_out, ag_metrics); }; });

  // eval
  TrainFlags ev_f;
  std::string ev_ckpt, ev_solver, ev_data, ev_cvrplib, ev_out, ev_format = "table", ev_ref = "auto",
                                                                   ev_timing = "on", ev_tours;
  int ev_aug = 8, ev_starts = 20;
  bool ev_gates = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or a reference solver");
  ev->add_option("--ckpt", ev_ckpt, "Policy checkpoint");
  ev->add_option("--solver", ev_solver, "nearest | exhaustive (instead of --ckpt)");
  ev->add_option("--data", ev_data, "Dataset directory with manifest.txt");
  ev->add_option("--cvrplib", ev_cvrplib, "A CVRPLIB instance file (instead of --data)");
  ev->add_option("--aug", ev_aug, "1 or 8")->capture_default_str();
  ev->add_option("--starts", ev_starts, "Greedy starts per instance")->capture_default_str();
  ev->add_option("--out", ev_out, "Report file (.json for JSON, otherwise the --format text)");
  ev->add_option("--format", ev_format, "table | csv")->capture_default_str();
  ev->add_option("--reference", ev_ref, "auto | exhaustive | nearest | none")->capture_default_str();
  ev->add_option("--timing", ev_timing, "on | off")->capture_default_str();
  ev->add_flag("--gates", ev_gates, "Record mean gate coefficients");
  ev->add_option("--tours", ev_tours, "Directory for the best tours");
  add_gating_flags(ev, ev_f);
  ev->callback([&] {
    action = [&] {
      return r.eval(ev_ckpt, ev_solver, ev_data, ev_cvrplib, ev_aug, ev_starts, ev_out, ev_format, ev_ref, ev_timing,
                    ev_gates, ev_tours, ev_f);
    };
  });

  // validate
  std::string va_instance, va_tour, va_data, va_tours;
  auto* va = app.add_subcommand("validate", "Check tour files against their instances");
  va->add_option("--instance", va_instance);
  va->add_option("--tour", va_tour);
  va->add_option("--data", va_data, "Dataset directory");
  va->add_option("--tours", va_tours, "Directory of <instance>.tour.json files");
  va->callback([&] { action = [&] { return r.validate(va_instance, va_tour, va_data, va_tours); }; });

  // gradcheck
  std::uint64_t gc_seed = 1;
  int gc_d = 16, gc_n = 6, gc_entries = 6;
  double gc_h = 1e-6;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the policy gradients");
  gc->add_option("--seed", gc_seed, "")->capture_default_str();
  gc->add_option("--d-model", gc_d, "")->capture_default_str();
  gc->add_option("--n", gc_n, "")->capture_default_str();
  gc->add_option("--entries", gc_entries, "Sampled coordinates per tensor (0 = all)")->capture_default_str();
  gc->add_option("--step", gc_h, "Central-difference step")->capture_default_str();
  gc->callback([&] { action = [&] { return r.gradcheck(gc_seed, gc_d, gc_n, gc_entries, gc_h); }; });

  // report
  std::string rp_in, rp_format = "table";
  auto* rp = app.add_subcommand("report", "Render a saved JSON evaluation report");
  rp->add_option("--input", rp_in, "Report JSON written by eval")->required();
  rp->add_option("--format", rp_format, "table | csv")->capture_default_str();
  rp->callback([&] { action = [&] { return r.report(rp_in, rp_format); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckFailed& e) {
    err << "check failed: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace mtvrp::cli
