/* Copyright 2026 The remdet-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "remdet/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "remdet/analysis.hpp"
#include "remdet/block_check.hpp"
#include "remdet/model_io.hpp"
#include "remdet/reparam.hpp"
#include "remdet/threading.hpp"
#include "remdet/toy_train.hpp"

namespace remdet {

using nlohmann::json;

namespace {

enum class Format { kTable, kCsv, kJsonl };

// One result table. CSV output starts with "# schema=<schema>".
struct Table {
  std::string schema;
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void add(std::vector<json> row) { rows.push_back(std::move(row)); }
};

std::string cell_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void print_table(const Table& t, Format fmt, std::ostream& out) {
  switch (fmt) {
    case Format::kCsv: {
      out << "# schema=" << t.schema << "\n";
      for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
      out << "\n";
      for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << csv_escape(cell_text(r[i]));
        out << "\n";
      }
      return;
    }
    case Format::kJsonl: {
      for (const auto& r : t.rows) {
        json obj = {{"schema", t.schema}};
        for (std::size_t i = 0; i < r.size(); ++i) obj[t.columns[i]] = r[i];
        out << obj.dump() << "\n";
      }
      return;
    }
    case Format::kTable: {
      std::vector<std::size_t> width(t.columns.size());
      for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
      for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], cell_text(r[i]).size());
      }
      const auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          out << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << cells[i];
        }
        out << "\n";
      };
      line(t.columns);
      for (const auto& r : t.rows) {
        std::vector<std::string> cells;
        for (const auto& v : r) cells.push_back(cell_text(v));
        line(cells);
      }
      out << "\n";
      return;
    }
  }
}

struct Extent {
  std::int64_t h = 0;
  std::int64_t w = 0;
};

Extent parse_extent(const std::string& s) {
  const auto x = s.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    const long long h = std::stoll(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const std::string rest = s.substr(x + 1);
    const long long w = std::stoll(rest, &used);
    if (used != rest.size() || h <= 0 || w <= 0) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--input", "expected HxW with positive extents, got '" + s + "'");
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--e", "not a number: '" + item + "'");
    }
  }
  return out;
}

std::string fmt_double(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Runs `fn.template operator()<T>()` with T matching the config dtype.
template <typename Fn>
int with_dtype(const ModelCfg& cfg, Fn&& fn) {
  if (cfg.dtype == DType::kF64) return fn.template operator()<double>();
  return fn.template operator()<float>();
}

template <typename T>
Model<T> obtain_model(const ModelCfg& cfg, const std::string& weights, std::uint64_t seed) {
  if (!weights.empty()) return load_weights<T>(weights, cfg);
  Model<T> m = build_model<T>(cfg, seed);
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  randomize_bn(m.params, rng);
  return m;
}

struct Percentiles {
  double p10, median, p90;
};

Percentiles percentiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto at = [&](double q) {
    const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) ;
    return v[std::min(v.size() - 1, i == 0 ? 0 : i - 1)];
  };
  return {at(0.10), at(0.50), at(0.90)};
}

// ---- subcommands ----------------------------------------------------------

int cmd_describe(const std::string& config, Format fmt, std::ostream& out) {
  const ModelCfg cfg = load_config(config);
  const auto strides = cfg.stage_strides();
  Table stages{"describe_stages.v1", {"stage", "width", "blocks", "block", "e", "downsample", "ced_t", "stride", "detail"}, {}};
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageCfg& s = cfg.stages[i];
    std::string detail;
    if (s.block == StageBlock::kC2f || s.block == StageBlock::kChannelC2f) {
      const C2fCfg c = s.block == StageBlock::kC2f ? C2fCfg::baseline(s.width, s.width, s.blocks)
                                                   : C2fCfg::channel(s.width, s.width, s.blocks);
      detail = "e_overall=" + fmt_double(c.e_overall) + " e_bottleneck=" + fmt_double(c.e_bottleneck) +
               " hidden=" + std::to_string(c.hidden()) + " concat=" + std::to_string(c.concat_width());
    } else if (s.block == StageBlock::kGatedFFN || s.block == StageBlock::kMult) {
      detail = "half_hidden=" + std::to_string(GatedFFNCfg{s.width, s.width, s.e}.half_hidden());
    } else {
      detail = "hidden=" + std::to_string(ConvFFNCfg{s.width, s.width, s.e}.hidden());
    }
    stages.add({static_cast<int>(i), s.width, s.blocks, std::string(stage_block_name(s.block)), s.e,
                std::string(downsample_name(s.downsample)), s.ced_t, strides[i], detail});
  }
  Table nodes{"describe.v1", {"node", "kind", "stage", "c_in", "c_out", "stride", "params"}, {}};
  for (const auto& n : expand_nodes(cfg)) {
    const std::int64_t params = static_cast<std::int64_t>(count_macs_params(n.cfg, 64, 64, n.name).params);
    nodes.add({n.name, std::string(block_kind_name(n.cfg)), n.stage, block_in_channels(n.cfg),
               block_out_channels(n.cfg), block_stride(n.cfg), params});
  }
  if (fmt == Format::kTable) {
    out << "model " << cfg.name << " (" << dtype_name(cfg.dtype) << ", in_channels " << cfg.in_channels
        << ", total stride " << cfg.total_stride() << (cfg.deploy ? ", deploy" : "") << ")\n\n";
  }
  print_table(stages, fmt, out);
  print_table(nodes, fmt, out);
  return kExitOk;
}

int cmd_flops(const std::string& config, const Extent& in, bool per_layer, bool fused, bool check, Format fmt,
              std::ostream& out, std::ostream& err) {
  ModelCfg cfg = load_config(config);
  if (fused) cfg.deploy = true;
  const MacReport r = count_model_macs(cfg, in.h, in.w);
  if (per_layer) {
    Table t{"flops.v1", {"layer", "macs", "params"}, {}};
    for (const MacReport* leaf : r.leaves()) t.add({leaf->name, leaf->macs, leaf->params});
    print_table(t, fmt, out);
  }
  Table total{"flops_total.v1", {"model", "input", "deploy", "macs", "params"}, {}};
  total.add({cfg.name, std::to_string(in.h) + "x" + std::to_string(in.w), cfg.deploy, r.macs, r.params});
  print_table(total, fmt, out);
  if (check) {
    std::uint64_t head = 0;
    for (const auto& c : r.children) head += c.name == "head.fc" ? c.macs : 0;
    const std::uint64_t oracle = model_mac_oracle(cfg, in.h, in.w);
    if (oracle != r.macs - head) {
      err << "mac oracle mismatch: counted " << (r.macs - head) << ", executed " << oracle << "\n";
      return kExitCheckFailed;
    }
    err << "mac oracle agrees: " << oracle << " conv MACs\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const std::string& kind, const BlockShapeArgs& shape, const GradcheckOptions& opts, Format fmt,
                  std::ostream& out) {
  const auto cfg = block_from_name(kind, shape);
  if (!cfg) throw Error(ErrorCode::kUnknownBlockKind, "unknown block kind '" + kind + "'", "--block");
  const GradcheckReport rep = gradcheck_block(*cfg, opts);
  Table t{"gradcheck.v1", {"tensor", "numel", "rel_error", "pass"}, {}};
  for (const auto& e : rep.entries) t.add({e.name, e.numel, e.rel_error, e.rel_error <= rep.tol});
  print_table(t, fmt, out);
  Table s{"gradcheck_summary.v1", {"block", "tensors", "worst_rel_error", "tol", "pass"}, {}};
  s.add({kind, static_cast<std::int64_t>(rep.entries.size()), rep.worst, rep.tol, rep.pass});
  print_table(s, fmt, out);
  return rep.pass ? kExitOk : kExitCheckFailed;
}

struct FuseArgs {
  std::string config, weights, out, out_config;
  std::uint64_t seed = 0;
  bool verify = false;
  int samples = 100;
  double tol = 1e-4;
  std::string input = "64x64";
};

int cmd_fuse(const FuseArgs& a, Format fmt, std::ostream& out, std::ostream& err) {
  const ModelCfg cfg = load_config(a.config);
  const Extent in = parse_extent(a.input);
  return with_dtype(cfg, [&]<typename T>() {
    const Model<T> model = obtain_model<T>(cfg, a.weights, a.seed);
    const Model<T> fused = fuse_model(model);
    save_weights(fused, a.out);
    if (!a.out_config.empty()) {
      const std::string text = config_to_json(fused.cfg) + "\n";
      write_file(a.out_config, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
    const MacReport before = count_model_macs(model.cfg, in.h, in.w);
    const MacReport after = count_model_macs(fused.cfg, in.h, in.w);
    Table t{"fuse.v1",
            {"model", "input", "macs_before", "macs_after", "params_before", "params_after", "samples", "tol",
             "max_abs_diff", "pass"},
            {}};
    int code = kExitOk;
    if (a.verify) {
      const FusionReport rep = verify_fusion(model, fused, a.samples, a.tol, a.seed + 1, in.h, in.w);
      t.add({cfg.name, a.input, before.macs, after.macs, before.params, after.params, a.samples, a.tol,
             rep.max_abs_diff, rep.pass});
      if (!rep.pass) {
        err << "fusion check failed: max|diff| " << rep.max_abs_diff << " > tol " << a.tol << "\n";
        code = kExitCheckFailed;
      }
    } else {
      t.add({cfg.name, a.input, before.macs, after.macs, before.params, after.params, 0, a.tol, nullptr, nullptr});
    }
    print_table(t, fmt, out);
    return code;
  });
}

struct BenchArgs {
  std::string config, weights, input;
  int iters = 20;
  int warmup = 3;
  int batch = 1;
  bool fused = false;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, Format fmt, std::ostream& out) {
  const ModelCfg cfg = load_config(a.config);
  const Extent in = parse_extent(a.input);
  if (a.iters < 1 || a.warmup < 0 || a.batch < 1) {
    throw CLI::ValidationError("bench", "--iters and --batch must be >= 1, --warmup >= 0");
  }
  return with_dtype(cfg, [&]<typename T>() {
    Model<T> model = obtain_model<T>(cfg, a.weights, a.seed);
    if (a.fused && !model.cfg.deploy) model = fuse_model(model);
    Rng rng(a.seed + 7);
    const auto x = random_normal<T>({a.batch, cfg.in_channels, in.h, in.w}, rng);
    for (int i = 0; i < a.warmup; ++i) model_forward(model, x);
    std::vector<double> ms;
    for (int i = 0; i < a.iters; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      model_forward(model, x);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    const Percentiles p = percentiles(ms);
    const MacReport macs = count_model_macs(model.cfg, in.h, in.w);
    std::vector<std::string> cols{"model", "input", "batch", "threads", "iters", "median_ms", "p10_ms", "p90_ms",
                                  "macs"};
    std::vector<json> row{cfg.name, a.input, a.batch, num_threads(), a.iters, p.median, p.p10, p.p90, macs.macs};
    if (a.fused) {
      ModelCfg train_cfg = model.cfg;
      train_cfg.deploy = false;
      const MacReport unfused = count_model_macs(train_cfg, in.h, in.w);
      cols.push_back("mac_delta");
      row.push_back(static_cast<std::int64_t>(macs.macs) - static_cast<std::int64_t>(unfused.macs));
    }
    Table t{"bench.v1", cols, {row}};
    print_table(t, fmt, out);
    return kExitOk;
  });
}

int cmd_train_toy(const ToyTrainCfg& tc, int every, Format fmt, std::ostream& out) {
  const ToyTrainResult r = train_toy(tc);
  Table curve{"train_toy.v1", {"step", "loss"}, {}};
  for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
    const bool last = i + 1 == r.loss_curve.size();
    if (fmt != Format::kTable || every <= 1 || i % static_cast<std::size_t>(every) == 0 || last) {
      curve.add({static_cast<std::int64_t>(i), r.loss_curve[i]});
    }
  }
  if (!curve.rows.empty()) print_table(curve, fmt, out);
  Table s{"train_toy_summary.v1",
          {"block", "expansion", "steps", "seed", "initial_loss", "final_loss", "final_train_acc"},
          {}};
  s.add({std::string(stage_block_name(tc.block)), tc.e, tc.steps, tc.seed, r.initial_loss, r.final_loss,
         r.final_train_acc});
  print_table(s, fmt, out);
  return kExitOk;
}

int cmd_rank(int d, int samples, double tol, std::uint64_t seed, Format fmt, std::ostream& out) {
  const RankResult r = rank_experiment(d, samples, tol, seed);
  Table t{"rank.v1", {"dim", "samples", "rank", "expected", "monomials", "sigma_max", "pass"}, {}};
  t.add({r.d, r.samples, r.estimated_rank, r.expected, r.monomials, r.sigma_max, r.pass});
  print_table(t, fmt, out);
  return r.pass ? kExitOk : kExitCheckFailed;
}

int cmd_sweep(std::int64_t c, const Extent& in, const std::vector<double>& es, bool oracle, double cross_mult,
              double cross_ffn, Format fmt, std::ostream& out, std::ostream& err) {
  const SweepResult s = expansion_sweep(c, in.h, in.w, es, oracle);
  Table t{"sweep.v1",
          {"e", "macs_convffn", "macs_mult", "closed_convffn", "closed_mult", "oracle_convffn", "oracle_mult",
           "ratio"},
          {}};
  bool ok = true;
  for (const auto& r : s.rows) {
    t.add({r.e, r.macs_convffn, r.macs_mult, r.closed_convffn, r.closed_mult,
           oracle ? json(r.oracle_convffn) : json(nullptr), oracle ? json(r.oracle_mult) : json(nullptr), r.ratio});
    if (oracle && (r.oracle_convffn != r.macs_convffn || r.oracle_mult != r.macs_mult)) ok = false;
  }
  print_table(t, fmt, out);
  const Fraction f = cost_ratio(c, in.h, in.w, cross_mult, cross_ffn);
  Table x{"sweep_ratio.v1", {"e_mult", "e_convffn", "num", "den", "value"}, {}};
  x.add({cross_mult, cross_ffn, f.num, f.den, f.value()});
  print_table(x, fmt, out);
  if (!ok) {
    err << "counted MACs disagree with the executed oracle\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_init(const std::string& config, std::uint64_t seed, bool randomize, const std::string& path,
             std::ostream& err) {
  const ModelCfg cfg = load_config(config);
  return with_dtype(cfg, [&]<typename T>() {
    Model<T> m = build_model<T>(cfg, seed);
    if (randomize) {
      Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
      randomize_bn(m.params, rng);
    }
    save_weights(m, path);
    err << "wrote " << m.params.size() << " tensors to " << path << "\n";
    return kExitOk;
  });
}

int default_threads() {
  if (const char* env = std::getenv("REMDET_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
    }
  }
  return 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"remdet: blocks, fusion and cost analysis for gated multiplication backbones", "remdet"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string format = "table";
  int threads = default_threads();
  app.add_option("--format", format, "Output format")->check(CLI::IsMember({"table", "csv", "jsonl"}));
  app.add_option("--threads", threads, "Worker threads (default: $REMDET_THREADS or 1)")->check(CLI::PositiveNumber);

  std::string config, input, weights, out_path;
  std::uint64_t seed = 0;

  auto* describe = app.add_subcommand("describe", "Print the expanded architecture");
  describe->add_option("--config", config, "Model config (JSON)")->required();

  bool per_layer = false, fused_flag = false, check = false;
  auto* flops = app.add_subcommand("flops", "Count MACs and parameters");
  flops->add_option("--config", config)->required();
  flops->add_option("--input", input, "Input extent HxW")->required();
  flops->add_flag("--per-layer", per_layer, "Print every convolution");
  flops->add_flag("--fused", fused_flag, "Count the deploy-mode graph");
  flops->add_flag("--check", check, "Cross-check against the executed counter");

  std::string block;
  BlockShapeArgs shape;
  GradcheckOptions gopts;
  bool batch_stats = false;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of one block in f64");
  grad->add_option("--block", block, "Block kind")->required()->check(CLI::IsMember(block_kind_names()));
  grad->add_option("--c1", shape.c1)->required()->check(CLI::PositiveNumber);
  grad->add_option("--c2", shape.c2)->required()->check(CLI::PositiveNumber);
  grad->add_option("--e", shape.e, "Expansion");
  grad->add_option("--n", shape.n, "C2f bottleneck count");
  grad->add_option("--t", shape.t, "CED expansion");
  grad->add_option("--seed", gopts.seed)->required();
  grad->add_option("--hw", gopts.h, "Square spatial extent")->check(CLI::PositiveNumber);
  grad->add_option("--tol", gopts.tol);
  grad->add_flag("--batch-stats", batch_stats, "Use batch statistics in BN");

  FuseArgs fa;
  auto* fuse = app.add_subcommand("fuse", "Fuse RepDW branches and write deploy weights");
  fuse->add_option("--config", fa.config)->required();
  fuse->add_option("--weights", fa.weights, "Train-mode weights (random init when omitted)");
  fuse->add_option("--seed", fa.seed, "Seed for random init and verification inputs");
  fuse->add_option("--out", fa.out, "Output weights")->required();
  fuse->add_option("--out-config", fa.out_config, "Also write the deploy config");
  fuse->add_flag("--verify", fa.verify);
  fuse->add_option("--samples", fa.samples)->check(CLI::PositiveNumber);
  fuse->add_option("--tol", fa.tol);
  fuse->add_option("--input", fa.input, "Verification input extent HxW");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time forward passes (informational)");
  bench->add_option("--config", ba.config)->required();
  bench->add_option("--input", ba.input)->required();
  bench->add_option("--iters", ba.iters)->required();
  bench->add_option("--warmup", ba.warmup)->required();
  bench->add_option("--batch", ba.batch);
  bench->add_option("--weights", ba.weights);
  bench->add_option("--seed", ba.seed);
  bench->add_flag("--fused", ba.fused);

  ToyTrainCfg tc;
  std::string toy_block;
  int every = 50;
  auto* train = app.add_subcommand("train-toy", "Train the toy classifier on synthetic bars");
  train->add_option("--block", toy_block)->required()->check(CLI::IsMember({"convffn", "mult", "gatedffn"}));
  train->add_option("--expansion", tc.e)->required();
  train->add_option("--steps", tc.steps)->required()->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tc.seed)->required();
  train->add_option("--lr", tc.hyper.lr);
  train->add_option("--batch", tc.batch);
  train->add_option("--every", every, "Table mode: print every Nth step");

  int dim = 0, samples = 0;
  double rank_tol = 1e-8;
  auto* rank = app.add_subcommand("rank", "Numerical rank of the gated quadratic forms");
  rank->add_option("--dim", dim)->required()->check(CLI::PositiveNumber);
  rank->add_option("--samples", samples)->required()->check(CLI::PositiveNumber);
  rank->add_option("--tol", rank_tol);
  rank->add_option("--seed", seed);

  std::int64_t sweep_c = 64;
  std::string sweep_input = "16x16", sweep_e = "1,2,3,4,5,6,7,8,9";
  bool no_oracle = false;
  double cross_mult = 9, cross_ffn = 7;
  auto* sweep = app.add_subcommand("sweep", "ConvFFN vs multiplication MACs over expansion");
  sweep->add_option("--c", sweep_c)->check(CLI::PositiveNumber);
  sweep->add_option("--input", sweep_input);
  sweep->add_option("--e", sweep_e, "Comma-separated expansions");
  sweep->add_flag("--no-oracle", no_oracle);
  sweep->add_option("--cross-mult", cross_mult);
  sweep->add_option("--cross-convffn", cross_ffn);

  bool randomize = false;
  auto* init = app.add_subcommand("init", "Write randomly initialized weights");
  init->add_option("--config", config)->required();
  init->add_option("--seed", seed)->required();
  init->add_option("--out", out_path)->required();
  init->add_flag("--randomize-bn", randomize, "Draw non-trivial BN statistics");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const Format fmt = format == "csv" ? Format::kCsv : format == "jsonl" ? Format::kJsonl : Format::kTable;
  set_num_threads(threads);
  try {
    if (*describe) return cmd_describe(config, fmt, out);
    if (*flops) return cmd_flops(config, parse_extent(input), per_layer, fused_flag, check, fmt, out, err);
    if (*grad) {
      gopts.w = gopts.h;
      gopts.bn_mode = batch_stats ? BnMode::kBatchStats : BnMode::kInference;
      return cmd_gradcheck(block, shape, gopts, fmt, out);
    }
    if (*fuse) return cmd_fuse(fa, fmt, out, err);
    if (*bench) return cmd_bench(ba, fmt, out);
    if (*train) {
      tc.block = *parse_stage_block(toy_block);
      return cmd_train_toy(tc, every, fmt, out);
    }
    if (*rank) return cmd_rank(dim, samples, rank_tol, seed, fmt, out);
    if (*sweep) {
      return cmd_sweep(sweep_c, parse_extent(sweep_input), parse_list(sweep_e), !no_oracle, cross_mult, cross_ffn,
                       fmt, out, err);
    }
    if (*init) return cmd_init(config, seed, randomize, out_path, err);
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kDivergedLoss ? kExitCheckFailed : kExitUsage;
  }
  return kExitUsage;
}

}  // namespace remdet
