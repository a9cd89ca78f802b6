#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scourcast/models/models.hpp"
#include "scourcast/nn/gradcheck.hpp"

namespace scour {

// Gradient checks over randomized tiny instances of every differentiable
// operator, plus every model family at toy size.
struct GradSuiteEntry {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  std::string worst;
};

namespace gradsuite_detail {

inline nn::Tensor random_normal(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline void record(GradSuiteEntry& e, const nn::GradCheckResult& r, std::size_t instance) {
  ++e.instances;
  if (r.max_rel_error >= e.max_rel_error) {
    e.max_rel_error = r.max_rel_error;
    e.worst = "instance " + std::to_string(instance) + " " + r.worst;
  }
}

}  // namespace gradsuite_detail

inline std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, std::size_t instances = 20,
                                                      std::size_t model_instances = 3) {
  using namespace nn;
  using gradsuite_detail::pick;
  using gradsuite_detail::random_normal;
  std::vector<GradSuiteEntry> out;

  auto run = [&](const std::string& name, std::size_t n, auto&& one) {
    GradSuiteEntry e;
    e.name = name;
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(seed, name, i);
      gradsuite_detail::record(e, one(rng), i);
    }
    out.push_back(e);
  };

  run("dense", instances, [](Rng& rng) {
    const std::size_t b = pick(rng, 1, 4), in = pick(rng, 1, 5), o = pick(rng, 1, 4);
    Dense d("dense", in, o, rng);
    return gradient_check(d, random_normal({b, in}, rng), squared_error_loss(random_normal({b, o}, rng)));
  });
  run("lstm_cell", instances, [](Rng& rng) {
    const std::size_t b = pick(rng, 1, 3), nx = pick(rng, 1, 4), u = pick(rng, 1, 4);
    LstmCellProbe cell(nx, u, rng);
    return gradient_check(cell, random_normal({b, nx + 2 * u}, rng, 0.8),
                          squared_error_loss(random_normal({b, 2 * u}, rng)));
  });
  run("lstm_bptt", instances, [](Rng& rng) {
    const std::size_t b = pick(rng, 1, 3), t = pick(rng, 2, 6), nx = pick(rng, 1, 3), u = pick(rng, 1, 4);
    const bool seq = rng.below(2) == 1;
    Lstm l("lstm", nx, u, seq, rng);
    const auto shape = seq ? std::vector<std::size_t>{b, t, u} : std::vector<std::size_t>{b, u};
    return gradient_check(l, random_normal({b, t, nx}, rng), squared_error_loss(random_normal(shape, rng)));
  });
  const std::pair<const char*, ConvMode> modes[] = {{"conv_vanilla", ConvMode::vanilla()},
                                                    {"conv_padded", ConvMode::padded()},
                                                    {"conv_causal", ConvMode::causal()},
                                                    {"conv_dilated_causal", ConvMode::dilated_causal(2)}};
  for (const auto& [name, base_mode] : modes) {
    run(name, instances, [mode = base_mode](Rng& rng) {
      ConvMode m = mode;
      if (m.kind == ConvMode::Kind::DilatedCausal) m.dilation = pick(rng, 1, 3);
      const std::size_t b = pick(rng, 1, 3), l = pick(rng, 3, 8), k = pick(rng, 2, std::min<std::size_t>(4, l));
      const std::size_t in = pick(rng, 1, 3), f = pick(rng, 1, 3);
      Conv1D conv("conv", in, f, k, m, rng);
      return gradient_check(conv, random_normal({b, l, in}, rng),
                            squared_error_loss(random_normal({b, conv_output_length(l, k, m), f}, rng)));
    });
  }
  run("batch_norm", instances, [](Rng& rng) {
    const std::size_t b = pick(rng, 2, 3), l = pick(rng, 2, 5), f = pick(rng, 1, 3);
    BatchNorm bn("bn", f);
    const Mode mode = rng.below(2) == 1 ? Mode::Train : Mode::Infer;
    if (mode == Mode::Infer) bn.forward(random_normal({b, l, f}, rng, 2.0), Mode::Train);
    return gradient_check(bn, random_normal({b, l, f}, rng, 2.0), squared_error_loss(random_normal({b, l, f}, rng)),
                          mode);
  });
  run("mse_loss", instances, [](Rng& rng) {
    const std::size_t b = pick(rng, 1, 3), w = pick(rng, 1, 4), c = pick(rng, 1, 3);
    ChannelMask mask;
    for (std::size_t k = 0; k < c; ++k)
      if (rng.below(2) == 1) mask.push_back(k);
    if (mask.empty()) mask.push_back(0);
    return loss_gradient_check(random_normal({b, w, c}, rng), random_normal({b, w, c}, rng), mask);
  });

  for (const char* text : {"ss-(6,3)-4-0.2", "ss2-(6,3)-3-0.2", "fb-(6,3)-4-0.2", "vcn-(8,3)-3-4-3-4-0.2",
                           "dcn-(8,3)-2-3-2-4-0.2", "fcn-(8,3)-3-4-2-3-0.2"}) {
    const ModelConfig cfg = parse_config(text);
    run(std::string("model ") + text, model_instances, [&cfg](Rng& rng) {
      const std::size_t n_in = pick(rng, 1, 3), n_t = pick(rng, 1, n_in), b = pick(rng, 1, 3);
      Binding bind{cfg.w_in, cfg.w_out, n_in, n_t, std::vector<bool>(n_in, false)};
      for (std::size_t k = 0; k < n_t; ++k) bind.target_inputs[k] = true;
      ForecastModel model = build_model(cfg, bind, rng.next_u64());
      model.graph().pin_dropout(true);
      ChannelMask mask(n_t);
      for (std::size_t k = 0; k < n_t; ++k) mask[k] = k;
      return gradient_check(model.graph(), random_normal({b, cfg.w_in, n_in}, rng),
                            masked_mse_loss(random_normal({b, cfg.w_out, n_t}, rng), mask));
    });
  }
  return out;
}

}  // namespace scour
