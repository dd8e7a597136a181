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

#include "remdet/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <set>
#include <utility>

namespace remdet {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

using u64 = std::uint64_t;

void check_extent(std::int64_t h, std::int64_t w) {
  if (h <= 0 || w <= 0) {
    fail(ErrorCode::kInvalidConfig, "input extent must be positive, got " + std::to_string(h) + "x" + std::to_string(w));
  }
}

// Walks a block's layers while tracking the spatial extent.
struct Counter {
  std::int64_t h;
  std::int64_t w;

  MacReport conv(const std::string& name, const ConvModuleCfg& cfg) {
    const ConvSpec& s = cfg.spec;
    MacReport r;
    r.name = name;
    r.macs = conv_macs(s, h, w);
    const auto cout = static_cast<u64>(s.out_channels);
    r.params = static_cast<u64>(shape_numel(s.weight_shape())) + (cfg.with_bn ? 2 * cout : cout);
    h = s.out_extent(h, s.kernel_h);
    w = s.out_extent(w, s.kernel_w);
    return r;
  }

  MacReport repdw(const std::string& prefix, const RepDWCfg& cfg) {
    MacReport r;
    r.name = prefix;
    if (cfg.mode == RepMode::kDeploy) {
      const ConvSpec s = fused_dw_spec(cfg.channels);
      MacReport leaf;
      leaf.name = join_name(prefix, "fused");
      leaf.macs = conv_macs(s, h, w);
      leaf.params = static_cast<u64>(shape_numel(s.weight_shape()) + cfg.channels);
      r.children.push_back(leaf);
      return r;
    }
    const auto [dw3, dw1] = repdw_layers(cfg.channels);
    const std::int64_t h0 = h, w0 = w;
    r.children.push_back(conv(join_name(prefix, "dw3"), dw3));
    h = h0;
    w = w0;
    r.children.push_back(conv(join_name(prefix, "dw1"), dw1));
    return r;
  }

  MacReport block(const std::string& prefix, const BlockCfg& cfg) {
    MacReport r;
    r.name = prefix;
    auto& ch = r.children;
    std::visit(Overloaded{
                   [&](const ConvModuleCfg& c) { ch.push_back(conv(prefix, c)); },
                   [&](const ConvFFNCfg& c) {
                     const auto [a, b] = convffn_layers(c);
                     ch.push_back(conv(join_name(prefix, "cv1"), a));
                     ch.push_back(conv(join_name(prefix, "cv2"), b));
                   },
                   [&](const MultiplicationCfg& c) {
                     const auto [a, b] = multiplication_layers(c);
                     ch.push_back(conv(join_name(prefix, "cv1"), a));
                     ch.push_back(conv(join_name(prefix, "cv2"), b));
                   },
                   [&](const RepDWCfg& c) { ch = repdw(prefix, c).children; },
                   [&](const GatedFFNCfg& c) {
                     const auto [a, b] = gatedffn_layers(c);
                     ch.push_back(conv(join_name(prefix, "cv1"), a));
                     ch.push_back(repdw(join_name(prefix, "repdw"), RepDWCfg{c.half_hidden(), c.mode}));
                     ch.push_back(conv(join_name(prefix, "cv2"), b));
                   },
                   [&](const CEDCfg& c) {
                     const CEDLayers l = ced_layers(c);
                     ch.push_back(conv(join_name(prefix, "pw1"), l.pw1));
                     ch.push_back(conv(join_name(prefix, "dw"), l.dw));
                     if (h % 2 != 0 || w % 2 != 0) {
                       fail(ErrorCode::kInvalidConfig, "ced at '" + prefix + "' needs even extents, got " +
                                                           std::to_string(h) + "x" + std::to_string(w));
                     }
                     h /= 2;
                     w /= 2;
                     ch.push_back(conv(join_name(prefix, "pw2"), l.pw2));
                   },
                   [&](const BottleneckCfg& c) {
                     const auto [a, b] = bottleneck_layers(c);
                     ch.push_back(conv(join_name(prefix, "cv1"), a));
                     ch.push_back(conv(join_name(prefix, "cv2"), b));
                   },
                   [&](const C2fCfg& c) {
                     const auto [a, b] = c2f_layers(c);
                     ch.push_back(conv(join_name(prefix, "cv1"), a));
                     const BottleneckCfg bc = c2f_bottleneck(c);
                     for (std::int64_t i = 0; i < c.n; ++i) {
                       ch.push_back(block(join_name(prefix, "m." + std::to_string(i)), bc));
                     }
                     ch.push_back(conv(join_name(prefix, "cv2"), b));
                   },
               },
               cfg);
    return r;
  }
};

void sum_up(MacReport& r) {
  if (r.is_leaf()) return;
  r.macs = 0;
  r.params = 0;
  for (auto& c : r.children) {
    sum_up(c);
    r.macs += c.macs;
    r.params += c.params;
  }
}

void collect_leaves(const MacReport& r, std::vector<const MacReport*>& out) {
  if (r.is_leaf()) {
    out.push_back(&r);
    return;
  }
  for (const auto& c : r.children) collect_leaves(c, out);
}

}  // namespace

std::vector<const MacReport*> MacReport::leaves() const {
  std::vector<const MacReport*> out;
  collect_leaves(*this, out);
  return out;
}

u64 conv_macs(const ConvSpec& spec, std::int64_t h, std::int64_t w) {
  spec.validate();
  const std::int64_t ho = spec.out_extent(h, spec.kernel_h);
  const std::int64_t wo = spec.out_extent(w, spec.kernel_w);
  return static_cast<u64>(spec.in_channels / spec.groups) * static_cast<u64>(spec.out_channels) *
         static_cast<u64>(spec.kernel_h * spec.kernel_w) * static_cast<u64>(ho * wo);
}

MacReport count_macs_params(const BlockCfg& cfg, std::int64_t h, std::int64_t w, const std::string& prefix) {
  check_extent(h, w);
  validate_block(cfg);
  Counter counter{h, w};
  MacReport r = counter.block(prefix.empty() ? std::string(block_kind_name(cfg)) : prefix, cfg);
  sum_up(r);
  return r;
}

MacReport count_model_macs(const ModelCfg& cfg, std::int64_t h, std::int64_t w) {
  check_extent(h, w);
  const auto nodes = expand_nodes(cfg);
  MacReport root;
  root.name = cfg.name;
  Counter counter{h, w};
  for (const auto& node : nodes) root.children.push_back(counter.block(node.name, node.cfg));
  if (cfg.head.kind == HeadKind::kToyClassifier) {
    MacReport head;
    head.name = "head.fc";
    const auto f = static_cast<u64>(cfg.out_channels());
    const auto k = static_cast<u64>(cfg.head.classes);
    head.macs = f * k;
    head.params = f * k + k;
    root.children.push_back(head);
  }
  sum_up(root);
  return root;
}

u64 mac_oracle(const BlockCfg& cfg, std::int64_t h, std::int64_t w) {
  check_extent(h, w);
  validate_block(cfg);
  const ParamStore<double> params = make_block_params<double>(cfg, 7);
  Tape<double> tape(false);
  Graph<double> g(tape, params);
  u64 count = 0;
  g.set_mac_counter(&count);
  Rng rng(11);
  const auto x = random_normal<double>({1, block_in_channels(cfg), h, w}, rng);
  try {
    block_forward(g, "", cfg, tape.constant(x));
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("block not executable: ") + e.what());
  }
  return count;
}

u64 model_mac_oracle(const ModelCfg& cfg, std::int64_t h, std::int64_t w) {
  check_extent(h, w);
  ModelCfg body = cfg;
  body.head.kind = HeadKind::kNone;
  const Model<double> model = build_model<double>(body, 7);
  Tape<double> tape(false);
  Graph<double> g(tape, model.params);
  u64 count = 0;
  g.set_mac_counter(&count);
  Rng rng(11);
  const auto x = random_normal<double>({1, cfg.in_channels, h, w}, rng);
  try {
    model_forward(g, model, tape.constant(x));
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("model not executable: ") + e.what());
  }
  return count;
}

Fraction reduced(u64 num, u64 den) {
  if (den == 0) fail(ErrorCode::kInvalidConfig, "zero denominator");
  const u64 g = std::gcd(num, den);
  return {num / g, den / g};
}

SweepResult expansion_sweep(std::int64_t c, std::int64_t h, std::int64_t w, const std::vector<double>& e_values,
                            bool with_oracle) {
  if (c <= 0) fail(ErrorCode::kInvalidConfig, "sweep channel count must be positive");
  check_extent(h, w);
  SweepResult out{c, h, w, {}};
  const double c2hw = static_cast<double>(c) * static_cast<double>(c) * static_cast<double>(h * w);
  for (double e : e_values) {
    if (!(e > 0.0)) fail(ErrorCode::kInvalidConfig, "expansion must be positive, got " + std::to_string(e));
    const ConvFFNCfg ffn{c, c, e, true};
    const MultiplicationCfg mul{c, c, e, true, false, GateMerge::kConcat};
    SweepRow row;
    row.e = e;
    row.macs_convffn = count_macs_params(ffn, h, w).macs;
    row.macs_mult = count_macs_params(mul, h, w).macs;
    row.closed_convffn = 2.0 * e * c2hw;
    row.closed_mult = 1.5 * e * c2hw;
    if (with_oracle) {
      row.oracle_convffn = mac_oracle(ffn, h, w);
      row.oracle_mult = mac_oracle(mul, h, w);
    }
    row.ratio = static_cast<double>(row.macs_mult) / static_cast<double>(row.macs_convffn);
    out.rows.push_back(row);
  }
  return out;
}

Fraction cost_ratio(std::int64_t c, std::int64_t h, std::int64_t w, double e_mult, double e_convffn) {
  const auto sweep_m = expansion_sweep(c, h, w, {e_mult}, false);
  const auto sweep_c = expansion_sweep(c, h, w, {e_convffn}, false);
  return reduced(sweep_m.rows[0].macs_mult, sweep_c.rows[0].macs_convffn);
}

RankResult rank_experiment(int d, int samples, double tol, std::uint64_t seed) {
  if (d < 1) fail(ErrorCode::kInvalidConfig, "rank experiment needs d >= 1");
  const int expected = d * (d + 1) / 2;
  if (samples < expected + d) {
    fail(ErrorCode::kInsufficientSamples, "need at least " + std::to_string(expected + d) + " samples for d=" +
                                              std::to_string(d) + ", got " + std::to_string(samples));
  }
  Rng rng(seed);
  Eigen::MatrixXd rows(samples, d * d);
  Eigen::VectorXd w1(d), w2(d);
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < d; ++i) w1[i] = rng.normal();
    for (int i = 0; i < d; ++i) w2[i] = rng.normal();
    const Eigen::MatrixXd m = 0.5 * (w1 * w2.transpose() + w2 * w1.transpose());
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) rows(s, i * d + j) = m(i, j);
    }
  }
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(rows);
  const Eigen::VectorXd& sv = svd.singularValues();
  RankResult r;
  r.d = d;
  r.samples = samples;
  r.expected = expected;
  r.monomials = monomial_oracle(d);
  r.sigma_max = sv.size() > 0 ? sv[0] : 0.0;
  const double cut = tol * r.sigma_max;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cut) {
      ++r.estimated_rank;
    } else {
      r.sigma_cut = std::max(r.sigma_cut, sv[i]);
    }
  }
  r.pass = r.estimated_rank == expected && r.monomials == expected;
  return r;
}

int monomial_oracle(int d) {
  if (d < 1) fail(ErrorCode::kInvalidConfig, "monomial oracle needs d >= 1");
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) seen.emplace(std::min(i, j), std::max(i, j));
  }
  return static_cast<int>(seen.size());
}

}  // namespace remdet
