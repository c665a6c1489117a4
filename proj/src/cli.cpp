// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gta/analysis.hpp"
#include "gta/data.hpp"
#include "gta/error.hpp"
#include "gta/gradcheck.hpp"
#include "gta/model.hpp"
#include "gta/rng.hpp"
#include "gta/serialize.hpp"
#include "gta/train.hpp"

namespace fs = std::filesystem;

namespace gta {
namespace {

constexpr double kGradCheckThreshold = 1e-4;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

bool parse_on_off_value(const std::string& key, const std::string& v) {
  if (v == "on" || v == "1") return true;
  if (v == "off" || v == "0") return false;
  throw ConfigError("spec: key '" + key + "' wants on|off, got '" + v + "'");
}

// Comma-separated geometry overrides, e.g. "t=8,h=16,w=16,patch=4,c=24".
ModelSpec apply_spec_string(ModelSpec base, const std::string& s) {
  if (s.empty()) return base;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    const std::string item = s.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("spec: entry '" + item + "' is not key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    auto as_count = [&]() -> std::size_t {
      if (val.empty() || val.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError("spec: key '" + key + "' wants a positive integer, got '" + val + "'");
      }
      return static_cast<std::size_t>(std::stoull(val));
    };
    if (key == "t") base.t = as_count();
    else if (key == "h") base.h = as_count();
    else if (key == "w") base.w = as_count();
    else if (key == "cin") base.c_in = as_count();
    else if (key == "patch") base.patch = as_count();
    else if (key == "c" || key == "channels") base.channels = as_count();
    else if (key == "classes") base.classes = as_count();
    else if (key == "norm") base.norm = parse_on_off_value(key, val);
    else if (key == "stem_bias") base.stem_bias = parse_on_off_value(key, val);
    else throw ConfigError("spec: unknown key '" + key + "'");
  }
  return base;
}

std::optional<std::string> env_out_dir() {
  const char* v = std::getenv("GTA_OUT_DIR");
  if (v && *v) return std::string(v);
  return std::nullopt;
}

std::string require_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (auto env = env_out_dir()) return *env;
  throw ConfigError("no output directory: pass --out or set GTA_OUT_DIR");
}

void refuse_unless_force(const fs::path& target, bool force) {
  if (!force && fs::exists(target)) {
    throw IoError("refusing to overwrite existing '" + target.string() +
                  "' (pass --force to replace it)");
  }
}

void write_resolved_config(const fs::path& dir, const KvPairs& kv) {
  fs::create_directories(dir);
  const std::string text = encode_kv(kv);
  write_file_atomic((dir / "config.resolved").string(),
                    std::vector<unsigned char>(text.begin(), text.end()));
}

// Read-only commands echo the resolved configuration instead of writing a
// file when no output directory is in play.
void emit_resolved_config(const std::string& out_flag, const KvPairs& kv,
                          std::ostream& out) {
  std::string dir = out_flag;
  if (dir.empty()) {
    if (auto env = env_out_dir()) dir = *env;
  }
  if (!dir.empty()) {
    write_resolved_config(dir, kv);
  } else {
    out << "# config.resolved\n" << encode_kv(kv);
  }
}

void append_spec_kv(KvPairs& kv, const ModelSpec& ms) {
  for (auto& [k, v] : ms.to_kv()) kv.emplace_back(k, v);
}

struct GenDataOpts {
  std::string task = "directional-dot";
  std::size_t n = 1000;
  std::size_t t = 8, h = 16, w = 16;
  std::uint64_t seed = 1;
  std::string out;
  bool force = false;
};

int cmd_gen_data(const GenDataOpts& o, std::ostream& out) {
  fs::path target(o.out.empty() ? std::string() : o.out);
  if (target.empty()) {
    target = fs::path(require_out_dir("")) / (o.task + ".gtad");
  }
  refuse_unless_force(target, o.force);
  const VideoDataset ds = generate_task(o.task, o.n, o.t, o.h, o.w, o.seed);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  save_dataset(ds, target.string());
  KvPairs kv{{"command", "gen-data"},
             {"task", o.task},
             {"n", std::to_string(o.n)},
             {"t", std::to_string(o.t)},
             {"h", std::to_string(o.h)},
             {"w", std::to_string(o.w)},
             {"seed", std::to_string(o.seed)},
             {"out", target.string()},
             {"force", o.force ? "1" : "0"}};
  write_resolved_config(target.has_parent_path() ? target.parent_path()
                                                 : fs::path("."),
                        kv);
  const auto counts = ds.class_counts();
  out << "wrote " << ds.size() << " samples to " << target.string()
      << " (class balance:";
  for (const std::size_t c : counts) out << " " << c;
  out << ")\n";
  return kExitOk;
}

struct TrainOpts {
  std::string spec;
  std::string blocks;
  std::string task;
  std::string data, test_data;
  std::size_t n = 2500, test_n = 500;
  Hyper hy;
  std::uint64_t seed = 1;
  std::string out;
  bool force = false;
};

struct LoadedSplits {
  VideoDataset train, test;
};

LoadedSplits resolve_datasets(const TrainOpts& o, const ModelSpec& ms) {
  if (!o.task.empty() && !o.data.empty()) {
    throw ConfigError("pass either --task or --data, not both");
  }
  if (!o.data.empty()) {
    if (o.test_data.empty()) {
      throw ConfigError("--data needs --test-data for the evaluation split");
    }
    return {load_dataset(o.data), load_dataset(o.test_data)};
  }
  const std::string task = o.task.empty() ? "directional-dot" : o.task;
  return {generate_task(task, o.n, ms.t, ms.h, ms.w, mix_seed(o.seed, "train-data")),
          generate_task(task, o.test_n, ms.t, ms.h, ms.w, mix_seed(o.seed, "test-data"))};
}

KvPairs train_kv(const TrainOpts& o, const ModelSpec& ms, const fs::path& dir) {
  KvPairs kv{{"command", "train"}};
  append_spec_kv(kv, ms);
  kv.emplace_back("task", o.task.empty() && o.data.empty() ? "directional-dot" : o.task);
  kv.emplace_back("data", o.data);
  kv.emplace_back("test_data", o.test_data);
  kv.emplace_back("n", std::to_string(o.n));
  kv.emplace_back("test_n", std::to_string(o.test_n));
  kv.emplace_back("epochs", std::to_string(o.hy.epochs));
  kv.emplace_back("batch", std::to_string(o.hy.batch));
  kv.emplace_back("lr", fmt("%.17g", o.hy.lr));
  kv.emplace_back("beta1", fmt("%.17g", o.hy.beta1));
  kv.emplace_back("beta2", fmt("%.17g", o.hy.beta2));
  kv.emplace_back("eps", fmt("%.17g", o.hy.eps));
  kv.emplace_back("clip", fmt("%.17g", o.hy.clip));
  kv.emplace_back("out", dir.string());
  kv.emplace_back("force", o.force ? "1" : "0");
  return kv;
}

int cmd_train(const TrainOpts& o, std::ostream& out) {
  ModelSpec ms = apply_spec_string(ModelSpec{}, o.spec);
  ms.seed = o.seed;
  ms.blocks = parse_block_plan(o.blocks);
  ms.validate();
  Hyper hy = o.hy;
  hy.seed = o.seed;
  hy.validate();

  const fs::path dir(require_out_dir(o.out));
  const fs::path metrics = dir / "metrics.csv";
  const fs::path ckpt = dir / "model.ckpt";
  refuse_unless_force(metrics, o.force);
  refuse_unless_force(ckpt, o.force);

  const LoadedSplits splits = resolve_datasets(o, ms);
  Model model(ms);
  const TrainResult result = train(model, splits.train, splits.test, hy);

  fs::create_directories(dir);
  write_metrics_csv(result.history, metrics.string());
  model.save_checkpoint(ckpt.string());
  write_resolved_config(dir, train_kv(o, ms, dir));

  for (const EpochRow& row : result.history) {
    if (row.split == "test") {
      out << "epoch " << row.epoch << ": test loss " << fmt("%.6f", row.loss)
          << ", test accuracy " << fmt("%.4f", row.accuracy) << "\n";
    }
  }
  out << "final test accuracy " << fmt("%.4f", result.final_test.accuracy)
      << "; wrote " << metrics.string() << " and " << ckpt.string() << "\n";
  return kExitOk;
}

struct EvalOpts {
  std::string ckpt;
  std::string data;
  std::size_t batch = 32;
  std::string out;
};

int cmd_eval(const EvalOpts& o, std::ostream& out) {
  Model model = Model::load_checkpoint(o.ckpt);
  const VideoDataset ds = load_dataset(o.data);
  const EvalResult r = evaluate(model, ds, o.batch);
  KvPairs kv{{"command", "eval"},
             {"ckpt", o.ckpt},
             {"data", o.data},
             {"batch", std::to_string(o.batch)}};
  append_spec_kv(kv, model.spec());
  emit_resolved_config(o.out, kv, out);
  out << "samples " << ds.size() << ", loss " << fmt("%.6f", r.loss)
      << ", accuracy " << fmt("%.4f", r.accuracy) << "\n";
  return kExitOk;
}

struct GradCheckOpts {
  std::string spec;
  std::string blocks = "nl,sa,ta,tape,dnl,gta[g=2,k=2]";
  std::uint64_t seed = 1;
  double step = 1e-6;
  std::size_t batch = 2;
  std::string out;
};

int cmd_gradcheck(const GradCheckOpts& o, std::ostream& out) {
  ModelSpec ms;
  ms.t = 4;
  ms.h = 4;
  ms.w = 4;
  ms.patch = 2;
  ms.channels = 8;
  ms = apply_spec_string(ms, o.spec);
  ms.seed = o.seed;
  ms.blocks = parse_block_plan(o.blocks);
  ms.validate();
  Model model(ms);

  // Re-draw every parameter from a generic stream: the seeded init leaves the
  // output projections at zero, which would leave whole branches untested.
  Rng rng(mix_seed(o.seed, "gradcheck-params"));
  for (Parameter* p : model.params()) {
    for (std::size_t i = 0; i < p->value().size(); ++i) {
      p->value().data()[i] = rng.normal(0.0, 0.05);
    }
  }

  Rng data_rng(mix_seed(o.seed, "gradcheck-data"));
  Tensor videos({o.batch, ms.t, ms.h, ms.w, ms.c_in});
  for (std::size_t i = 0; i < videos.size(); ++i) {
    videos.data()[i] = data_rng.uniform();
  }
  std::vector<std::size_t> labels(o.batch);
  for (std::size_t i = 0; i < o.batch; ++i) {
    labels[i] = data_rng.uniform_int(ms.classes);
  }

  std::vector<Parameter*> trainable;
  for (Parameter* p : model.params()) {
    if (p->trainable()) trainable.push_back(p);
  }
  const GradCheckReport report = grad_check(
      [&](Tape* tape) {
        return cross_entropy(model.forward(videos, tape), labels);
      },
      trainable, o.step);

  KvPairs kv{{"command", "gradcheck"},
             {"blocks", format_block_plan(ms.blocks)},
             {"seed", std::to_string(o.seed)},
             {"step", fmt("%.17g", o.step)},
             {"batch", std::to_string(o.batch)}};
  append_spec_kv(kv, ms);
  emit_resolved_config(o.out, kv, out);

  out << "max relative error " << fmt("%.3e", report.max_rel_err) << " at "
      << report.worst_param << "[" << report.worst_index << "] (analytic "
      << fmt("%.9e", report.analytic) << ", numeric "
      << fmt("%.9e", report.numeric) << ")\n";
  if (!(report.max_rel_err < kGradCheckThreshold)) {
    throw NumericError("gradient check failed: " + fmt("%.3e", report.max_rel_err) +
                       " >= " + fmt("%.0e", kGradCheckThreshold));
  }
  out << "gradient check passed (threshold " << fmt("%.0e", kGradCheckThreshold)
      << ")\n";
  return kExitOk;
}

struct FlopsOpts {
  std::string dims = "paper";
  std::string blocks = "nl,dnl,gta";
  std::string convention = "runtime";
  bool csv = false;
  std::string out;
};

struct DimSpec {
  std::size_t t = 8, h = 16, w = 16, c = 64;
};

DimSpec parse_dims(const std::string& s) {
  DimSpec d;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    const std::string item = s.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("dims: entry '" + item + "' is not key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    if (val.empty() || val.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("dims: key '" + key + "' wants a positive integer");
    }
    const std::size_t v = static_cast<std::size_t>(std::stoull(val));
    if (key == "t") d.t = v;
    else if (key == "h") d.h = v;
    else if (key == "w") d.w = v;
    else if (key == "c") d.c = v;
    else throw ConfigError("dims: unknown key '" + key + "'");
  }
  return d;
}

int cmd_flops(const FlopsOpts& o, std::ostream& out) {
  FlopReport report;
  if (o.dims == "paper") {
    report = report_reference_stack();
  } else {
    const DimSpec d = parse_dims(o.dims);
    CostConvention conv;
    if (o.convention == "runtime") conv = CostConvention::Runtime;
    else if (o.convention == "paper") conv = CostConvention::Paper;
    else throw ConfigError("convention must be runtime or paper, got '" + o.convention + "'");
    report = report_plan(parse_block_plan(o.blocks), d.t, d.h, d.w, d.c, conv);
  }

  KvPairs kv{{"command", "flops"},
             {"dims", o.dims},
             {"blocks", o.blocks},
             {"convention", convention_name(report.convention)},
             {"csv", o.csv ? "1" : "0"}};
  emit_resolved_config(o.out, kv, out);

  out << (o.csv ? report.to_csv() : report.to_table());
  if (o.dims == "paper") {
    std::uint64_t fl[3] = {0, 0, 0}, pa[3] = {0, 0, 0};
    for (const FlopRow& r : report.rows) {
      const int idx = r.kind == "nl" ? 0 : r.kind == "dnl" ? 1 : 2;
      fl[idx] += r.flops;
      pa[idx] += r.params;
    }
    const double nl_dnl = static_cast<double>(fl[0]) / static_cast<double>(fl[1]);
    const double gta_over = (static_cast<double>(fl[2]) - static_cast<double>(fl[1])) /
                            static_cast<double>(fl[1]);
    out << "extra-cost ordering: nl " << (fl[0] > fl[2] ? ">" : "<=") << " gta "
        << (fl[2] > fl[1] ? ">" : "<=") << " dnl\n"
        << "nl/dnl flop ratio: " << fmt("%.6f", nl_dnl) << "\n"
        << "(gta - dnl)/dnl: " << fmt("%+.4f", gta_over * 100.0) << "%\n"
        << "params (M): nl " << fmt("%.4f", static_cast<double>(pa[0]) / 1e6)
        << ", dnl " << fmt("%.4f", static_cast<double>(pa[1]) / 1e6) << ", gta "
        << fmt("%.4f", static_cast<double>(pa[2]) / 1e6) << "\n";
  }
  return kExitOk;
}

struct DumpAttnOpts {
  std::string ckpt;
  std::string data;
  std::size_t index = 0;
  std::string out;
  bool force = false;
};

int cmd_dump_attn(const DumpAttnOpts& o, std::ostream& out) {
  Model model = Model::load_checkpoint(o.ckpt);
  const VideoDataset ds = load_dataset(o.data);
  if (o.index >= ds.size()) {
    throw ConfigError("--index " + std::to_string(o.index) +
                      " out of range for " + std::to_string(ds.size()) +
                      " samples");
  }
  const fs::path dir(require_out_dir(o.out));
  if (!o.force && fs::exists(dir) && !fs::is_empty(dir)) {
    throw IoError("refusing to write into non-empty '" + dir.string() +
                  "' (pass --force to replace files)");
  }
  const std::vector<std::string> files =
      dump_attention(model, ds.samples[o.index], dir.string());
  KvPairs kv{{"command", "dump-attn"},
             {"ckpt", o.ckpt},
             {"data", o.data},
             {"index", std::to_string(o.index)},
             {"out", dir.string()},
             {"force", o.force ? "1" : "0"}};
  append_spec_kv(kv, model.spec());
  write_resolved_config(dir, kv);
  out << "wrote " << files.size() << " matrix files to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{
      "Temporal attention workbench: synthetic order-sensitive video tasks, "
      "trainable attention blocks, gradient verification, cost accounting, "
      "and attention-matrix export."};
  app.require_subcommand(1);
  // Help stays long-form only; -h would collide with the --h height option.
  app.set_help_flag("--help", "print help and exit");
  const auto add_subcommand = [&app](const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->set_help_flag("--help", "print help and exit");
    return sub;
  };

  GenDataOpts gen;
  CLI::App* c_gen = add_subcommand("gen-data", "Generate a synthetic video dataset");
  c_gen->add_option("--task", gen.task, "directional-dot | reveal-cover");
  c_gen->add_option("--n", gen.n, "sample count (even; classes are balanced)");
  c_gen->add_option("--t", gen.t, "frames per clip");
  c_gen->add_option("--h", gen.h, "frame height");
  c_gen->add_option("--w", gen.w, "frame width");
  c_gen->add_option("--seed", gen.seed, "generator seed");
  c_gen->add_option("--out", gen.out, "output dataset file");
  c_gen->add_flag("--force", gen.force, "overwrite an existing output file");

  TrainOpts tr;
  CLI::App* c_train = add_subcommand("train", "Train a model and write metrics + checkpoint");
  c_train->add_option("--spec", tr.spec,
                      "geometry overrides: t,h,w,cin,patch,c,classes,norm,stem_bias");
  c_train->add_option("--blocks", tr.blocks,
                      "block plan: comma-separated nl|sa|ta|tape|dnl|gta with "
                      "options, e.g. sa,gta[g=8,k=4,ccmh=on]");
  c_train->add_option("--task", tr.task, "generate data on the fly: directional-dot | reveal-cover");
  c_train->add_option("--data", tr.data, "training dataset file (instead of --task)");
  c_train->add_option("--test-data", tr.test_data, "evaluation dataset file");
  c_train->add_option("--n", tr.n, "generated training samples");
  c_train->add_option("--test-n", tr.test_n, "generated evaluation samples");
  c_train->add_option("--epochs", tr.hy.epochs, "training epochs");
  c_train->add_option("--batch", tr.hy.batch, "minibatch size");
  c_train->add_option("--lr", tr.hy.lr, "learning rate");
  c_train->add_option("--clip", tr.hy.clip, "global gradient-norm clip (0 = off)");
  c_train->add_option("--seed", tr.seed, "seed for init, shuffling and generated data");
  c_train->add_option("--out", tr.out, "output directory");
  c_train->add_flag("--force", tr.force, "overwrite existing outputs");

  EvalOpts ev;
  CLI::App* c_eval = add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  c_eval->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
  c_eval->add_option("--data", ev.data, "dataset file")->required();
  c_eval->add_option("--batch", ev.batch, "evaluation batch size");
  c_eval->add_option("--out", ev.out, "directory for config.resolved (optional)");

  GradCheckOpts gc;
  CLI::App* c_grad = add_subcommand(
      "gradcheck", "Compare analytic gradients against central differences");
  c_grad->add_option("--spec", gc.spec, "geometry overrides (default t=4,h=4,w=4,patch=2,c=8)");
  c_grad->add_option("--blocks", gc.blocks, "block plan (default: one of each kind)");
  c_grad->add_option("--seed", gc.seed, "seed for parameters and probe data");
  c_grad->add_option("--step", gc.step, "central-difference step");
  c_grad->add_option("--batch", gc.batch, "probe batch size");
  c_grad->add_option("--out", gc.out, "directory for config.resolved (optional)");

  FlopsOpts fl;
  CLI::App* c_flops = add_subcommand("flops", "Analytic per-block flop/parameter accounting");
  c_flops->add_option("--dims", fl.dims, "'paper' for the reference five-block stack, or t=..,h=..,w=..,c=..");
  c_flops->add_option("--blocks", fl.blocks, "block plan to cost (ignored with --dims paper)");
  c_flops->add_option("--convention", fl.convention, "runtime | paper (ignored with --dims paper)");
  c_flops->add_flag("--csv", fl.csv, "emit CSV instead of a table");
  c_flops->add_option("--out", fl.out, "directory for config.resolved (optional)");

  DumpAttnOpts da;
  CLI::App* c_dump = add_subcommand("dump-attn", "Export attention matrices for one sample");
  c_dump->add_option("--ckpt", da.ckpt, "checkpoint file")->required();
  c_dump->add_option("--data", da.data, "dataset file")->required();
  c_dump->add_option("--index", da.index, "sample index");
  c_dump->add_option("--out", da.out, "output directory");
  c_dump->add_flag("--force", da.force, "write into a non-empty directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen, out);
    if (c_train->parsed()) return cmd_train(tr, out);
    if (c_eval->parsed()) return cmd_eval(ev, out);
    if (c_grad->parsed()) return cmd_gradcheck(gc, out);
    if (c_flops->parsed()) return cmd_flops(fl, out);
    if (c_dump->parsed()) return cmd_dump_attn(da, out);
    err << "error: no subcommand selected\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace gta
