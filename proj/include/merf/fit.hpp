#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "merf/contraction.hpp"
#include "merf/field.hpp"
#include "merf/grid.hpp"
#include "merf/mlp.hpp"
#include "merf/model.hpp"
#include "merf/parallel.hpp"
#include "merf/render.hpp"
#include "merf/scene.hpp"

namespace merf {

struct LossRecord {
  int iteration = 0;
  double loss = 0.0;        // photometric + weight decay
  double train_psnr = 0.0;  // from the batch photometric MSE
};

struct FitConfig {
  int iterations = 2000;
  int batch_rays = 1 << 14;
  double lr_init = 1e-4;
  double lr_peak = 1e-2;
  double lr_final = 1e-3;
  int warmup_iterations = 100;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-15;
  double weight_decay = 0.1;  // on grid parameters only
  bool quantization_aware = true;
  double density_init = 0.0;  // initial raw value of the density channel
  std::uint64_t seed = 0;
  std::optional<MarchConfig> march;  // unset: renderer defaults for the plane resolution
  // Samples whose cell upper-bound alpha is below this are not evaluated. 0 disables.
  double skip_alpha = 1e-4;
  int threads = 1;
  int progress_every = 50;
  std::function<void(const LossRecord&)> on_progress;

  void validate() const {
    if (iterations < 1 || batch_rays < 1) {
      throw std::invalid_argument("fit needs positive iterations and batch size");
    }
    if (!(lr_init > 0.0 && lr_peak > 0.0 && lr_final > 0.0) || warmup_iterations < 0) {
      throw std::invalid_argument("learning rates must be positive");
    }
    if (!(weight_decay >= 0.0) || !(skip_alpha >= 0.0 && skip_alpha < 1.0)) {
      throw std::invalid_argument("invalid weight decay or skip threshold");
    }
    if (march) march->validate();
  }

  MarchConfig march_for(const GridShape& shape) const {
    return march ? *march : MarchConfig::for_plane_resolution(shape.plane_res);
  }
};

// Warmup then decay, both log-linear.
inline double learning_rate(const FitConfig& cfg, int iteration) {
  auto loglerp = [](double a, double b, double t) {
    return std::exp(std::log(a) + std::clamp(t, 0.0, 1.0) * (std::log(b) - std::log(a)));
  };
  if (iteration < cfg.warmup_iterations) {
    return loglerp(cfg.lr_init, cfg.lr_peak,
                   static_cast<double>(iteration) / cfg.warmup_iterations);
  }
  const int decay = cfg.iterations - cfg.warmup_iterations;
  if (decay <= 1) return cfg.lr_peak;
  return loglerp(cfg.lr_peak, cfg.lr_final,
                 static_cast<double>(iteration - cfg.warmup_iterations) / (decay - 1));
}

struct TrainingRay {
  Ray ray;
  Rgb target{};
};

inline std::vector<TrainingRay> training_rays(const std::vector<TrainingView>& views) {
  std::vector<TrainingRay> rays;
  for (const auto& v : views) {
    const Camera& c = v.camera;
    for (int y = 0; y < c.height; ++y) {
      for (int x = 0; x < c.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * c.width + x;
        rays.push_back({c.pixel_ray(x, y), {v.image.rgb[i * 3], v.image.rgb[i * 3 + 1],
                                            v.image.rgb[i * 3 + 2]}});
      }
    }
  }
  return rays;
}

inline std::vector<Ray> rays_of(std::span<const TrainingRay> rays) {
  std::vector<Ray> out;
  out.reserve(rays.size());
  for (const auto& r : rays) out.push_back(r.ray);
  return out;
}

// Per voxel cell, whether every point inside is guaranteed to have alpha below
// a threshold. The bound adds the maxima of the voxel corners and of the plane
// texels the cell projects onto; interpolation cannot exceed either.
class EmptyCellMask {
 public:
  EmptyCellMask() = default;

  EmptyCellMask(const FieldGrids& values, double step, double alpha_threshold)
      : cells_(values.shape.voxel_res - 1) {
    const GridShape& s = values.shape;
    const int n = cells_;
    // Plane index span covered by voxel cell i along one axis.
    std::vector<std::array<int, 2>> span(n);
    for (int i = 0; i < n; ++i) {
      const double lo = 4.0 * i / n - 2.0;
      const double hi = 4.0 * (i + 1) / n - 2.0;
      span[i] = {lerp_coord(lo, s.plane_res).index, lerp_coord(hi, s.plane_res).index + 1};
    }
    std::array<std::vector<double>, 3> plane_max;
    for (int a = 0; a < 3; ++a) {
      plane_max[a].assign(static_cast<std::size_t>(n) * n, 0.0);
      for (int v = 0; v < n; ++v) {
        for (int u = 0; u < n; ++u) {
          double m = -std::numeric_limits<double>::infinity();
          for (int pv = span[v][0]; pv <= span[v][1]; ++pv) {
            for (int pu = span[u][0]; pu <= span[u][1]; ++pu) {
              m = std::max(m, values.planes[a][plane_index(s, pu, pv) * kChannels]);
            }
          }
          plane_max[a][static_cast<std::size_t>(v) * n + u] = m;
        }
      }
    }
    // alpha < threshold  <=>  t0 < log(-log(1 - threshold) / step)
    const double t_limit = std::log(-std::log1p(-alpha_threshold) / step);
    empty_.assign(static_cast<std::size_t>(n) * n * n, 0);
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          double m = -std::numeric_limits<double>::infinity();
          for (int c = 0; c < 8; ++c) {
            m = std::max(m, values.voxel[voxel_index(s, i + (c & 1), j + ((c >> 1) & 1),
                                                     k + ((c >> 2) & 1)) *
                                         kChannels]);
          }
          m += plane_max[0][static_cast<std::size_t>(k) * n + j] +
               plane_max[1][static_cast<std::size_t>(k) * n + i] +
               plane_max[2][static_cast<std::size_t>(j) * n + i];
          empty_[(static_cast<std::size_t>(k) * n + j) * n + i] = m < t_limit ? 1 : 0;
        }
      }
    }
  }

  bool empty(const std::array<int, 3>& cell) const {
    if (empty_.empty()) return false;
    return empty_[(static_cast<std::size_t>(cell[2]) * cells_ + cell[1]) * cells_ + cell[0]] != 0;
  }

  double fraction_empty() const {
    if (empty_.empty()) return 0.0;
    return static_cast<double>(std::count(empty_.begin(), empty_.end(), 1)) /
           static_cast<double>(empty_.size());
  }

 private:
  int cells_ = 0;
  std::vector<std::uint8_t> empty_;
};

namespace detail {

// Flattened interpolation footprint: array offsets and weights of the 8 voxel
// corners followed by 4 texels of each plane.
struct FlatStencil {
  std::array<std::size_t, 20> offset;
  std::array<double, 20> weight;
  std::array<int, 3> cell;  // voxel cell, for the empty mask
};

inline FlatStencil flatten(const GridShape& s, const Stencil& st) {
  FlatStencil f;
  for (int corner = 0; corner < 8; ++corner) {
    f.weight[corner] = st.voxel_weight(corner);
    f.offset[corner] = voxel_index(s, st.voxel[0].index + (corner & 1),
                                   st.voxel[1].index + ((corner >> 1) & 1),
                                   st.voxel[2].index + ((corner >> 2) & 1)) *
                       kChannels;
  }
  for (int a = 0; a < 3; ++a) {
    for (int corner = 0; corner < 4; ++corner) {
      const int n = 8 + 4 * a + corner;
      f.weight[n] = st.plane_weight(a, corner);
      f.offset[n] = plane_index(s, st.plane[a][0].index + (corner & 1),
                                st.plane[a][1].index + ((corner >> 1) & 1)) *
                    kChannels;
    }
  }
  f.cell = {st.voxel[0].index, st.voxel[1].index, st.voxel[2].index};
  return f;
}

inline const double* source_of(const GridArrays<double>& g, int n) {
  return n < 8 ? g.voxel.data() : g.planes[(n - 8) / 4].data();
}

// Same summation order as interpolate() so results match the renderer bit for bit.
inline ChannelVector gather(const FieldGrids& g, const FlatStencil& st) {
  ChannelVector t{};
  for (int n = 0; n < 20; ++n) {
    const double w = st.weight[n];
    const double* __restrict src = source_of(g, n) + st.offset[n];
    for (int c = 0; c < kChannels; ++c) t[c] += w * src[c];
  }
  return t;
}

inline double gather_density(const FieldGrids& g, const FlatStencil& st) {
  double t = 0.0;
  for (int n = 0; n < 20; ++n) t += st.weight[n] * source_of(g, n)[st.offset[n]];
  return t;
}

inline void scatter(GridArrays<double>& g, const FlatStencil& st, const ChannelVector& dt_in) {
  const ChannelVector dt = dt_in;
  for (int n = 0; n < 20; ++n) {
    const double w = st.weight[n];
    double* __restrict dst = const_cast<double*>(source_of(g, n)) + st.offset[n];
    for (int c = 0; c < kChannels; ++c) dst[c] += w * dt[c];
  }
}

struct SampleRecord {
  FlatStencil stencil;
  double density = 0.0;
  double transmittance_after = 0.0;
  std::array<double, kAppearanceChannels> appearance{};  // diffuse then features
};

}  // namespace detail

struct RayForward {
  Rgb color{};
  RayAccumulation accumulation;
  std::size_t samples = 0;
};

// Per-thread scratch and gradient sinks.
struct RayWorkspace {
  std::vector<detail::SampleRecord> samples;
  MlpTape tape;
};

// Forward (and, when grad_values is set, backward) pass of one training ray.
// grad_scale multiplies dL/dC; the returned value is the squared error summed
// over channels (not scaled).
inline double trace_ray(const Ray& ray, const Rgb* target, const FieldGrids& values,
                        const DeferredMlp& mlp, const MarchConfig& cfg,
                        const EmptyCellMask* skip, RayWorkspace& ws, RayForward* forward,
                        GridArrays<double>* grad_values, DeferredMlp* grad_mlp,
                        double grad_scale) {
  const SegmentedRay segmented = segment_ray(ray);
  const double step = cfg.step_size;
  RayAccumulation acc;
  ws.samples.clear();
  int steps = 0;
  bool done = false;
  for (const RaySegment& seg : segmented.segments) {
    if (done) break;
    for (std::int64_t k = 0;; ++k) {
      const double s = (static_cast<double>(k) + 0.5) * step;
      if (s >= seg.length) break;
      if (++steps > cfg.max_steps) {
        done = true;
        break;
      }
      const Point3 p = seg.contracted_at(s);
      const detail::FlatStencil st = detail::flatten(values.shape, make_stencil(values.shape, p));
      if (skip && skip->empty(st.cell)) continue;
      const FieldSample sample = activate(detail::gather(values, st));
      acc = composite_step(acc, sample, step);
      detail::SampleRecord rec;
      rec.stencil = st;
      rec.density = sample.density;
      rec.transmittance_after = acc.transmittance;
      std::copy(sample.diffuse.begin(), sample.diffuse.end(), rec.appearance.begin());
      std::copy(sample.feature.begin(), sample.feature.end(), rec.appearance.begin() + 3);
      ws.samples.push_back(rec);
      if (acc.transmittance < cfg.termination_transmittance) {
        done = true;
        break;
      }
    }
  }

  const auto x = mlp_input(acc.diffuse, acc.feature, ray.direction);
  const Rgb h = mlp_forward(mlp, x, &ws.tape);
  Rgb color{};
  for (int c = 0; c < 3; ++c) color[c] = std::clamp(acc.diffuse[c] + h[c], 0.0, 1.0);
  if (forward) *forward = {color, acc, ws.samples.size()};
  if (!target) return 0.0;

  double sq = 0.0;
  Rgb g_color{};
  for (int c = 0; c < 3; ++c) {
    const double r = color[c] - (*target)[c];
    sq += r * r;
    const double pre = acc.diffuse[c] + h[c];
    g_color[c] = (pre > 0.0 && pre < 1.0) ? 2.0 * r * grad_scale : 0.0;
  }
  if (!grad_values) return sq;

  const auto g_x = mlp_backward(mlp, ws.tape, g_color, *grad_mlp);
  std::array<double, kAppearanceChannels> g_acc{};
  for (int c = 0; c < 3; ++c) g_acc[c] = g_color[c] + g_x[c];
  for (int k = 0; k < kFeatures; ++k) g_acc[3 + k] = g_x[3 + k];

  // dL/dtau_i = step * (T_{i+1} (g . v_i) - sum_{j > i} w_j (g . v_j))
  double suffix = 0.0;
  double t_before = 1.0;
  for (std::size_t n = ws.samples.size(); n-- > 0;) {
    const auto& rec = ws.samples[n];
    t_before = n == 0 ? 1.0 : ws.samples[n - 1].transmittance_after;
    const double w = t_before - rec.transmittance_after;
    double gv = 0.0;
    for (int c = 0; c < kAppearanceChannels; ++c) gv += g_acc[c] * rec.appearance[c];
    const double g_density = step * (rec.transmittance_after * gv - suffix);
    suffix += w * gv;
    ChannelVector dt{};
    dt[0] = g_density * rec.density;
    for (int c = 0; c < kAppearanceChannels; ++c) {
      const double v = rec.appearance[c];
      dt[1 + c] = w * g_acc[c] * v * (1.0 - v);
    }
    detail::scatter(*grad_values, rec.stencil, dt);
  }
  return sq;
}

// Loss terms and parameter gradients for one batch.
struct Gradients {
  double loss = 0.0;
  double photometric = 0.0;  // mean squared error per channel
  RawGrids grid;
  DeferredMlp mlp;
};

// Reusable buffers for repeated evaluations of one model shape.
class FitWorkspace {
 public:
  FitWorkspace(const GridShape& shape, int threads)
      : values_(shape), sig_(shape), threads_(std::max(1, threads)) {
    worker_grads_.reserve(threads_);
    for (int t = 0; t < threads_; ++t) worker_grads_.emplace_back(shape);
    worker_mlp_.assign(threads_, DeferredMlp::zeros());
    rays_.resize(threads_);
  }

  const FieldGrids& values() const { return values_; }
  const EmptyCellMask& mask() const { return mask_; }

  // Grid values as the forward pass sees them, and sigmoid(raw) for the backward.
  void materialize(const FieldModel& model) {
    auto apply = [&](const std::vector<double>& raw, std::vector<double>& sig,
                     std::vector<double>& dst) {
      for (std::size_t i = 0; i < raw.size(); ++i) {
        const double m = model.quant.range(static_cast<int>(i % kChannels));
        const double s = sigmoid(raw[i]);
        sig[i] = s;
        dst[i] = model.quantization_aware
                     ? decode_cell(static_cast<std::uint8_t>(std::floor(kByteMax * s + 0.5)), m)
                     : 2.0 * m * s - m;
      }
    };
    apply(model.raw.voxel, sig_.voxel, values_.voxel);
    for (int a = 0; a < 3; ++a) apply(model.raw.planes[a], sig_.planes[a], values_.planes[a]);
  }

  void build_mask(double step, double alpha_threshold) {
    mask_ = alpha_threshold > 0.0 ? EmptyCellMask(values_, step, alpha_threshold) : EmptyCellMask();
  }

  // Loss over rays and, if grad is set, its gradient. Call materialize first.
  double evaluate(const FieldModel& model, std::span<const TrainingRay> rays,
                  const MarchConfig& march, double weight_decay, Gradients* grad,
                  std::size_t* samples = nullptr) {
    const double scale = 1.0 / (3.0 * static_cast<double>(rays.size()));
    const bool want_grad = grad != nullptr;
    const int threads = std::max(1, std::min<int>(threads_, static_cast<int>(rays.size())));
    std::vector<double> partial(threads, 0.0);
    std::vector<std::size_t> counts(threads, 0);
    if (want_grad) {
      for (int t = 0; t < threads; ++t) {
        worker_grads_[t].for_each_array([](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
        worker_mlp_[t] = DeferredMlp::zeros();
      }
    }
    const EmptyCellMask* skip = &mask_;
    parallel_chunks(rays.size(), threads, [&](std::size_t begin, std::size_t end, int w) {
      RayForward fwd;
      for (std::size_t i = begin; i < end; ++i) {
        partial[w] += trace_ray(rays[i].ray, &rays[i].target, values_, model.mlp, march, skip,
                                rays_[w], &fwd, want_grad ? &worker_grads_[w] : nullptr,
                                want_grad ? &worker_mlp_[w] : nullptr, scale);
        counts[w] += fwd.samples;
      }
    });
    double sq = 0.0;
    for (double p : partial) sq += p;
    if (samples) *samples = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    const double photometric = sq * scale;

    double decay = 0.0;
    const double n_params = static_cast<double>(model.raw.parameter_count());
    model.raw.for_each_array([&](const std::vector<double>& v) {
      for (double r : v) decay += r * r;
    });
    decay *= weight_decay / n_params;
    const double loss = photometric + decay;
    if (!want_grad) return loss;

    grad->loss = loss;
    grad->photometric = photometric;
    if (!(grad->grid.shape == model.raw.shape)) grad->grid = RawGrids(model.raw.shape);
    grad->mlp = DeferredMlp::zeros();
    // Fixed reduction order over workers.
    auto reduce = [&](auto member) {
      auto& dst = member(grad->grid);
      std::fill(dst.begin(), dst.end(), 0.0);
      for (int t = 0; t < threads; ++t) {
        const auto& src = member(worker_grads_[t]);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    };
    reduce([](GridArrays<double>& g) -> std::vector<double>& { return g.voxel; });
    for (int a = 0; a < 3; ++a) {
      reduce([a](GridArrays<double>& g) -> std::vector<double>& { return g.planes[a]; });
    }
    for (int t = 0; t < threads; ++t) {
      for (std::size_t l = 0; l < grad->mlp.layers.size(); ++l) {
        auto& d = grad->mlp.layers[l];
        const auto& s = worker_mlp_[t].layers[l];
        for (std::size_t i = 0; i < d.weights.size(); ++i) d.weights[i] += s.weights[i];
        for (std::size_t i = 0; i < d.bias.size(); ++i) d.bias[i] += s.bias[i];
      }
    }
    // Chain to raw parameters. The quantiser passes gradients straight through,
    // so both modes use d(2m sigmoid(raw) - m)/d raw.
    const double decay_scale = 2.0 * weight_decay / n_params;
    auto chain = [&](std::vector<double>& g, const std::vector<double>& sig,
                     const std::vector<double>& raw) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double m = model.quant.range(static_cast<int>(i % kChannels));
        const double s = sig[i];
        g[i] = g[i] * (2.0 * m * s * (1.0 - s)) + decay_scale * raw[i];
      }
    };
    chain(grad->grid.voxel, sig_.voxel, model.raw.voxel);
    for (int a = 0; a < 3; ++a) chain(grad->grid.planes[a], sig_.planes[a], model.raw.planes[a]);
    return loss;
  }

 private:
  FieldGrids values_;
  RawGrids sig_;
  EmptyCellMask mask_;
  int threads_;
  std::vector<GridArrays<double>> worker_grads_;
  std::vector<DeferredMlp> worker_mlp_;
  std::vector<RayWorkspace> rays_;
};

// One-shot loss (and gradient) evaluation; skipping follows cfg.skip_alpha.
inline double loss_and_gradients(const FieldModel& model, std::span<const TrainingRay> rays,
                                  const FitConfig& cfg, Gradients* grad) {
  FitWorkspace ws(model.raw.shape, cfg.threads);
  ws.materialize(model);
  const MarchConfig march = cfg.march_for(model.raw.shape);
  ws.build_mask(march.step_size, cfg.skip_alpha);
  return ws.evaluate(model, rays, march, cfg.weight_decay, grad);
}

// First and second moments for one parameter array.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grad,
                      AdamMoments& s, double lr, double bias1, double bias2,
                      const FitConfig& cfg) {
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
    s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
    params[i] -= lr * (s.m[i] / bias1) / (std::sqrt(s.v[i] / bias2) + cfg.epsilon);
  }
}

struct FitResult {
  FieldModel model;
  std::vector<LossRecord> history;
  double seconds = 0.0;
  double mean_samples_per_ray = 0.0;  // over the last iteration
};

// Optimises raw grids and the deferred MLP against posed images.
inline FitResult fit_field(std::span<const TrainingRay> rays, const GridShape& shape,
                           const FitConfig& cfg) {
  cfg.validate();
  shape.validate();
  if (rays.empty()) throw std::invalid_argument("fit needs at least one training ray");
  const auto start = std::chrono::steady_clock::now();

  FitResult result;
  FieldModel& model = result.model;
  model.raw = RawGrids(shape);
  if (cfg.density_init != 0.0) {
    model.raw.for_each_array([&](std::vector<double>& v) {
      for (std::size_t i = 0; i < v.size(); i += kChannels) v[i] = cfg.density_init;
    });
  }
  model.mlp = DeferredMlp::random(cfg.seed);
  model.quantization_aware = cfg.quantization_aware;
  const MarchConfig march = cfg.march_for(shape);

  FitWorkspace ws(shape, cfg.threads);
  Gradients grad;
  grad.grid = RawGrids(shape);
  AdamMoments voxel_m;
  std::array<AdamMoments, 3> plane_m;
  std::vector<AdamMoments> mlp_w(model.mlp.layers.size());
  std::vector<AdamMoments> mlp_b(model.mlp.layers.size());

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(rays.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  const std::size_t batch_size = std::min<std::size_t>(cfg.batch_rays, rays.size());
  std::vector<TrainingRay> batch(batch_size);

  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t b = 0; b < batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch[b] = rays[order[cursor++]];
    }
    ws.materialize(model);
    ws.build_mask(march.step_size, cfg.skip_alpha);
    std::size_t samples = 0;
    const double loss = ws.evaluate(model, batch, march, cfg.weight_decay, &grad, &samples);
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "non-finite loss " << loss << " at iteration " << it << " (photometric "
         << grad.photometric << ", lr " << learning_rate(cfg, it) << ")";
      throw std::runtime_error(os.str());
    }
    const LossRecord rec{it, loss,
                         grad.photometric > 0.0 ? -10.0 * std::log10(grad.photometric)
                                                : std::numeric_limits<double>::infinity()};
    result.history.push_back(rec);
    result.mean_samples_per_ray = static_cast<double>(samples) / batch_size;
    if (cfg.on_progress && (it % std::max(1, cfg.progress_every) == 0 || it + 1 == cfg.iterations)) {
      cfg.on_progress(rec);
    }

    const double lr = learning_rate(cfg, it);
    const double bias1 = 1.0 - std::pow(cfg.beta1, it + 1);
    const double bias2 = 1.0 - std::pow(cfg.beta2, it + 1);
    adam_step(model.raw.voxel, grad.grid.voxel, voxel_m, lr, bias1, bias2, cfg);
    for (int a = 0; a < 3; ++a) {
      adam_step(model.raw.planes[a], grad.grid.planes[a], plane_m[a], lr, bias1, bias2, cfg);
    }
    for (std::size_t l = 0; l < model.mlp.layers.size(); ++l) {
      adam_step(model.mlp.layers[l].weights, grad.mlp.layers[l].weights, mlp_w[l], lr, bias1,
                bias2, cfg);
      adam_step(model.mlp.layers[l].bias, grad.mlp.layers[l].bias, mlp_b[l], lr, bias1, bias2,
                cfg);
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline FitResult fit_field(const std::vector<TrainingView>& views, const GridShape& shape,
                           const FitConfig& cfg) {
  if (views.empty()) throw std::invalid_argument("fit needs at least one view");
  const auto rays = training_rays(views);
  return fit_field(rays, shape, cfg);
}

// Renders a view of an unbaked model through the reference marcher.
inline FloatImage render_model(const Camera& camera, const FieldModel& model,
                               const MarchConfig& cfg, int threads = 1) {
  const FieldGrids values = model.grids();
  return render_reference(camera, ContinuousSource(values), nullptr, model.mlp, cfg, threads);
}

// ---------------------------------------------------------------------------
// Two-pass sampling: stratified in contracted arc length, then inverse-CDF
// resampling proportional to the first pass's compositing weights.

struct SamplingCounts {
  int stratified = 64;
  int refined = 64;
};

// Contracted point at arc length u along a segmented ray.
inline Point3 contracted_point_at(const SegmentedRay& ray, double u) {
  for (const auto& seg : ray.segments) {
    if (u <= seg.length) return seg.contracted_at(std::max(u, 0.0));
    u -= seg.length;
  }
  const auto& last = ray.segments.back();
  return last.contracted_at(last.length);
}

struct TwoPassSamples {
  std::vector<double> stratified;  // pass 1 positions
  std::vector<double> weights;     // pass 1 weights
  std::vector<double> refined;     // pass 2 positions
  std::vector<double> all;         // union, strictly increasing
  double stratum = 0.0;            // pass 1 spacing
};

template <FieldSource S>
TwoPassSamples stratified_then_refined_sampling(const Ray& ray, const S& field,
                                                const SamplingCounts& counts,
                                                std::mt19937_64& rng) {
  if (counts.stratified < 1 || counts.refined < 1) {
    throw std::invalid_argument("sample counts must be at least 1");
  }
  const SegmentedRay seg = segment_ray(ray);
  const double total = seg.contracted_length();
  TwoPassSamples out;
  const int n = counts.stratified;
  out.stratum = total / n;
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  double transmittance = 1.0;
  for (int i = 0; i < n; ++i) {
    const double u = (i + jitter(rng)) * out.stratum;
    const double tau = query_density_only(field, contracted_point_at(seg, u));
    const double alpha = alpha_from_density(tau, out.stratum);
    out.stratified.push_back(u);
    out.weights.push_back(transmittance * alpha);
    transmittance *= 1.0 - alpha;
  }
  // Piecewise-constant pdf over strata; all-zero weights fall back to uniform.
  std::vector<double> cdf(n + 1, 0.0);
  double sum = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  for (int i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + (sum > 0.0 ? out.weights[i] / sum : 1.0 / n);
  cdf[n] = 1.0;
  for (int j = 0; j < counts.refined; ++j) {
    const double q = (j + 0.5) / counts.refined;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), q);
    const int i = std::clamp(static_cast<int>(it - cdf.begin()) - 1, 0, n - 1);
    const double width = cdf[i + 1] - cdf[i];
    const double f = width > 0.0 ? (q - cdf[i]) / width : 0.5;
    out.refined.push_back((i + f) * out.stratum);
  }
  out.all = out.stratified;
  out.all.insert(out.all.end(), out.refined.begin(), out.refined.end());
  std::sort(out.all.begin(), out.all.end());
  out.all.erase(std::unique(out.all.begin(), out.all.end()), out.all.end());
  return out;
}

}  // namespace merf
