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

#include "remdet/block_check.hpp"

#include <algorithm>
#include <cmath>

#include "remdet/gradcheck.hpp"

namespace remdet {

const std::vector<std::string>& block_kind_names() {
  static const std::vector<std::string> names{"conv", "convffn", "mult", "mult-retain", "repdw", "gatedffn",
                                              "ced",  "bottleneck", "c2f", "channelc2f"};
  return names;
}

std::optional<BlockCfg> block_from_name(std::string_view kind, const BlockShapeArgs& a) {
  if (kind == "conv") return ConvModuleCfg{{a.c1, a.c2, 3, 3, 1, 1, 1}, true, Act::kSiLU};
  if (kind == "convffn") return ConvFFNCfg{a.c1, a.c2, a.e, true};
  if (kind == "mult") return MultiplicationCfg{a.c1, a.c2, a.e, true, false, GateMerge::kConcat};
  if (kind == "mult-retain") return MultiplicationCfg{a.c1, a.c2, a.e, true, true, GateMerge::kConcat};
  if (kind == "repdw") return RepDWCfg{a.c1, RepMode::kTrain};
  if (kind == "gatedffn") return GatedFFNCfg{a.c1, a.c2, a.e, true, RepMode::kTrain};
  if (kind == "ced") return CEDCfg{a.c1, a.c2, a.t};
  if (kind == "bottleneck") return BottleneckCfg{a.c1, 1.0, true};
  if (kind == "c2f") return C2fCfg::baseline(a.c1, a.c2, a.n);
  if (kind == "channelc2f") return C2fCfg::channel(a.c1, a.c2, a.n);
  return std::nullopt;
}

GradcheckReport gradcheck_block(const BlockCfg& cfg, const GradcheckOptions& opts) {
  validate_block(cfg);
  ParamStore<double> params = make_block_params<double>(cfg, opts.seed);
  Rng rng(opts.seed + 1);
  randomize_bn(params, rng);
  const Tensor<double> x = random_normal<double>({opts.batch, block_in_channels(cfg), opts.h, opts.w}, rng);

  // Forward value of sum(out * probe) for given params and input.
  Tensor<double> probe;
  const auto functional = [&](const ParamStore<double>& p, const Tensor<double>& xin) {
    Tape<double> tape(false);
    Graph<double> g(tape, p, opts.bn_mode);
    const Tensor<double>& out = tape.value(block_forward(g, "", cfg, tape.constant(xin)));
    double s = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) s += out[i] * probe[i];
    return s;
  };

  Tape<double> tape;
  Graph<double> g(tape, params, opts.bn_mode);
  const Var xv = tape.leaf(x, true);
  const Var out = block_forward(g, "", cfg, xv);
  probe = random_normal<double>(tape.value(out).shape(), rng);
  tape.backward(ad::weighted_sum(tape, out, probe));

  GradcheckReport report;
  report.tol = opts.tol;
  const auto add = [&](std::string name, const Tensor<double>& analytic, const Tensor<double>& numeric) {
    const double err = relative_error(analytic, numeric);
    report.worst = std::isnan(err) || std::isnan(report.worst) ? std::nan("") : std::max(report.worst, err);
    report.entries.push_back({std::move(name), analytic.numel(), err});
  };

  add("input", tape.grad(xv),
      finite_diff_scaled<double>([&](const Tensor<double>& xp) { return functional(params, xp); }, x, opts.rel_step));

  const auto grads = g.param_grads();
  for (const auto& [name, entry] : params.entries()) {
    if (!is_trainable(entry.kind)) continue;
    auto it = grads.find(name);
    const Tensor<double> analytic = it != grads.end() ? it->second : Tensor<double>(entry.value.shape());
    ParamStore<double> work = params;
    Tensor<double>& slot = work.get(name);
    const auto f = [&](const Tensor<double>& pv) {
      slot = pv;
      return functional(work, x);
    };
    add(name, analytic, finite_diff_scaled<double>(f, entry.value, opts.rel_step));
  }
  report.pass = !std::isnan(report.worst) && report.worst <= opts.tol;
  return report;
}

}  // namespace remdet
