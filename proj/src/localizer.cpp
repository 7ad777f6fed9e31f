#include "ovtal/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ovtal/error.hpp"
#include "ovtal/rng.hpp"

namespace ovtal {

// ---- geometry -------------------------------------------------------------

PyramidGeometry PyramidGeometry::with_levels(std::size_t levels, double base_range) {
  if (levels == 0) throw InvalidInput("PyramidGeometry: need at least one level");
  if (!(base_range > 0.0)) throw InvalidInput("PyramidGeometry: base range must be positive");
  PyramidGeometry g;
  g.bounds.push_back(0.0);
  for (std::size_t l = 1; l < levels; ++l)
    g.bounds.push_back(base_range * static_cast<double>(std::size_t{1} << (l - 1)));
  g.bounds.push_back(std::numeric_limits<double>::infinity());
  return g;
}

std::size_t PyramidGeometry::level_length(std::size_t level, std::size_t num_snippets) const {
  const std::size_t s = std::size_t{1} << level;
  return (num_snippets + s - 1) / s;
}

void PyramidGeometry::validate() const {
  if (bounds.size() < 2) throw InvalidInput("PyramidGeometry: need at least one level");
  if (bounds.front() != 0.0 || !std::isinf(bounds.back()))
    throw InvalidInput("PyramidGeometry: ranges must start at 0 and end at infinity");
  for (std::size_t i = 1; i < bounds.size(); ++i)
    if (!(bounds[i] > bounds[i - 1]))
      throw InvalidInput("PyramidGeometry: ranges must be strictly increasing");
}

// ---- parameters -----------------------------------------------------------

LocalizerParams::LocalizerParams(const LocalizerParams& other)
    : shape(other.shape), geometry(other.geometry) {
  tensors.reserve(other.tensors.size());
  for (const auto& t : other.tensors) tensors.push_back({t.name, t.value.clone()});
}

LocalizerParams& LocalizerParams::operator=(const LocalizerParams& other) {
  if (this != &other) {
    LocalizerParams tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

const Tensor& LocalizerParams::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw InvalidInput("LocalizerParams: no tensor named '" + name + "'");
}

Tensor& LocalizerParams::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::vector<Tensor> LocalizerParams::handles() const {
  std::vector<Tensor> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) out.push_back(t.value);
  return out;
}

std::size_t LocalizerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

void LocalizerParams::zero_grad() {
  for (auto& t : tensors) t.value.zero_grad();
}

bool LocalizerParams::identical(const LocalizerParams& other) const {
  if (!(geometry == other.geometry) || tensors.size() != other.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& a = tensors[i];
    const auto& b = other.tensors[i];
    if (a.name != b.name || a.value.shape() != b.value.shape()) return false;
    auto da = a.value.data();
    auto db = b.value.data();
    if (!std::equal(da.begin(), da.end(), db.begin())) return false;
  }
  return true;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, CounterRng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

void add_conv(LocalizerParams& p, const std::string& name, std::size_t cout, std::size_t cin,
              std::size_t k, CounterRng& rng, double bias = 0.0) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k));
  p.tensors.push_back({name + ".w", uniform_tensor({cout, cin, k}, bound, rng)});
  p.tensors.push_back({name + ".b", Tensor::full({cout}, bias, true)});
}

void add_norm(LocalizerParams& p, const std::string& name, std::size_t c) {
  p.tensors.push_back({name + ".g", Tensor::full({c}, 1.0, true)});
  p.tensors.push_back({name + ".b", Tensor::full({c}, 0.0, true)});
}

Tensor conv(const LocalizerParams& p, const std::string& name, const Tensor& x) {
  const std::size_t k = p.get(name + ".w").dim(2);
  return conv1d(x, p.get(name + ".w"), p.get(name + ".b"), 1, k / 2);
}

Tensor norm(const LocalizerParams& p, const std::string& name, const Tensor& x) {
  return layer_norm(x, p.get(name + ".g"), p.get(name + ".b"));
}

}  // namespace

LocalizerParams localizer_init(const LocalizerShape& shape, std::uint64_t seed) {
  if (shape.in_dim == 0 || shape.hidden == 0) throw InvalidInput("localizer_init: zero width");
  if (shape.kernel % 2 == 0) throw InvalidInput("localizer_init: kernel must be odd");
  LocalizerParams p;
  p.shape = shape;
  p.geometry = PyramidGeometry::with_levels(shape.levels, shape.base_range);
  CounterRng rng = CounterRng(seed).split("localizer_init");
  const std::size_t h = shape.hidden, k = shape.kernel;

  add_conv(p, "proj", h, shape.in_dim, k, rng);

  for (std::size_t l = 0; l < shape.levels; ++l) {
    const std::string name = "enc" + std::to_string(l);
    add_conv(p, name, h, h, k, rng);
    add_norm(p, name + ".ln", h);
  }
  // Focal-loss prior: initial foreground probability 0.01.
  add_conv(p, "cls.0", h, h, k, rng);
  add_conv(p, "cls.1", 1, h, k, rng, -std::log(99.0));
  // Positive bias keeps the ReLU-bounded offsets alive at the start.
  add_conv(p, "reg.0", h, h, k, rng);
  add_conv(p, "reg.1", 2, h, k, rng, 1.0);
  return p;
}

std::vector<LevelOutput> localizer_forward(const LocalizerParams& params,
                                           const SnippetFeatures& features) {
  const auto& m = features.features;
  if (m.rows == 0) throw InvalidInput("localizer_forward: empty video");
  if (m.cols != params.shape.in_dim)
    throw InvalidInput("localizer_forward: feature dim " + std::to_string(m.cols) +
                       " != localizer input dim " + std::to_string(params.shape.in_dim));
  Tensor x = Tensor::from({m.rows, m.cols}, m.values);
  Tensor h = relu(conv(params, "proj", x));

  std::vector<LevelOutput> out;
  for (std::size_t l = 0; l < params.geometry.levels(); ++l) {
    if (l > 0) h = downsample_max2(h);
    const std::string name = "enc" + std::to_string(l);
    h = add(h, relu(norm(params, name + ".ln", conv(params, name, h))));
    LevelOutput lo;
    lo.logits = conv(params, "cls.1", relu(conv(params, "cls.0", h)));
    lo.offsets = relu(conv(params, "reg.1", relu(conv(params, "reg.0", h))));
    out.push_back(std::move(lo));
  }
  return out;
}

// ---- targets & decoding ----------------------------------------------------

std::size_t AssignedTargets::num_positive() const {
  std::size_t n = 0;
  for (const auto& lvl : levels)
    for (const auto& t : lvl) n += t.positive ? 1 : 0;
  return n;
}

AssignedTargets assign_targets(const std::vector<ActionInstance>& gt,
                               const PyramidGeometry& geometry, std::size_t num_snippets) {
  if (num_snippets == 0) throw InvalidInput("assign_targets: empty video");
  geometry.validate();
  const double s = static_cast<double>(num_snippets);
  for (const auto& g : gt) {
    require_valid(g.interval(), "assign_targets");
    if (g.start < 0.0 || g.end > s) throw InvalidInput("assign_targets: GT outside [0, S]");
  }

  AssignedTargets out;
  out.levels.resize(geometry.levels());
  for (std::size_t l = 0; l < geometry.levels(); ++l) {
    const double stride = geometry.stride(l);
    const double lo = geometry.range_lo(l), hi = geometry.range_hi(l);
    auto& lvl = out.levels[l];
    lvl.resize(geometry.level_length(l, num_snippets));
    for (std::size_t i = 0; i < lvl.size(); ++i) {
      const double t = location_center(i, stride);
      const ActionInstance* best = nullptr;
      for (const auto& g : gt) {
        if (!(g.start < t && t < g.end)) continue;
        const double reach = std::max(t - g.start, g.end - t);
        if (reach < lo || reach >= hi) continue;
        if (!best || g.end - g.start < best->end - best->start) best = &g;
      }
      if (!best) continue;
      auto& tgt = lvl[i];
      tgt.positive = true;
      tgt.offset_start = (t - best->start) / stride;
      tgt.offset_end = (best->end - t) / stride;
      tgt.source = best->interval();
    }
  }
  return out;
}

namespace {

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// log(sigmoid(v)) without overflow.
double log_sigmoid(double v) {
  return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
}

}  // namespace

std::vector<ActionInstance> decode_instances(const std::vector<LevelOutput>& outputs,
                                             const PyramidGeometry& geometry,
                                             std::size_t num_snippets) {
  if (outputs.size() != geometry.levels())
    throw InvalidInput("decode_instances: level count mismatch");
  const double s = static_cast<double>(num_snippets);
  std::vector<ActionInstance> out;
  for (std::size_t l = 0; l < outputs.size(); ++l) {
    const double stride = geometry.stride(l);
    auto logits = outputs[l].logits.data();
    auto offsets = outputs[l].offsets.data();
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double t = location_center(i, stride);
      ActionInstance inst;
      inst.start = std::clamp(t - offsets[2 * i] * stride, 0.0, s);
      inst.end = std::clamp(t + offsets[2 * i + 1] * stride, 0.0, s);
      if (!(inst.start < inst.end)) continue;
      inst.actionness = sigmoid_scalar(logits[i]);
      out.push_back(inst);
    }
  }
  return out;
}

// ---- losses ----------------------------------------------------------------

namespace {

struct DiouTerms {
  double loss;
  double d_start;  // dL / d pred.start
  double d_end;    // dL / d pred.end
};

// Tolerates a degenerate prediction as long as the target is proper.
DiouTerms diou_with_grad(double ps, double pe, double gs, double ge) {
  const double lo = std::max(ps, gs), hi = std::min(pe, ge);
  const double inter = std::max(0.0, hi - lo);
  const double uni = (pe - ps) + (ge - gs) - inter;
  const double enc = std::max(pe, ge) - std::min(ps, gs);
  const double delta = 0.5 * (ps + pe) - 0.5 * (gs + ge);
  const double iou = inter / uni;
  const double loss = 1.0 - iou + (delta * delta) / (enc * enc);

  const bool overlap = hi > lo;
  const double di_s = (overlap && ps > gs) ? -1.0 : 0.0;
  const double di_e = (overlap && pe < ge) ? 1.0 : 0.0;
  const double du_s = -1.0 - di_s;
  const double du_e = 1.0 - di_e;
  const double diou_s = (di_s * uni - inter * du_s) / (uni * uni);
  const double diou_e = (di_e * uni - inter * du_e) / (uni * uni);
  const double dc_s = ps < gs ? -1.0 : 0.0;
  const double dc_e = pe > ge ? 1.0 : 0.0;
  const double k = delta / (enc * enc);
  const double q = 2.0 * delta * delta / (enc * enc * enc);
  return {loss, -diou_s + k - q * dc_s, -diou_e + k - q * dc_e};
}

}  // namespace

double diou_loss_1d(const Interval& pred, const Interval& gt) {
  require_valid(pred, "diou_loss_1d(pred)");
  require_valid(gt, "diou_loss_1d(gt)");
  return diou_with_grad(pred.start, pred.end, gt.start, gt.end).loss;
}

double focal_loss(std::span<const double> logits, std::span<const std::uint8_t> labels,
                  const FocalParams& fp) {
  if (logits.size() != labels.size()) throw InvalidInput("focal_loss: label count mismatch");
  double total = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const bool y = labels[i] != 0;
    pos += y ? 1 : 0;
    const double z = y ? logits[i] : -logits[i];
    const double q = sigmoid_scalar(z);
    const double a = y ? fp.alpha : 1.0 - fp.alpha;
    total += -a * std::pow(1.0 - q, fp.gamma) * log_sigmoid(z);
  }
  return total / static_cast<double>(std::max<std::size_t>(1, pos));
}

LossBreakdown localizer_loss(const std::vector<LevelOutput>& outputs,
                             const AssignedTargets& targets, const LossConfig& cfg) {
  if (outputs.size() != targets.levels.size())
    throw InvalidInput("localizer_loss: level count mismatch");
  std::vector<Tensor> logit_parts, offset_parts;
  std::vector<std::uint8_t> labels;
  std::vector<LocationTarget> flat;
  for (std::size_t l = 0; l < outputs.size(); ++l) {
    if (outputs[l].logits.dim(0) != targets.levels[l].size())
      throw InvalidInput("localizer_loss: level " + std::to_string(l) + " length mismatch");
    logit_parts.push_back(outputs[l].logits);
    offset_parts.push_back(outputs[l].offsets);
    for (const auto& t : targets.levels[l]) {
      labels.push_back(t.positive ? 1 : 0);
      flat.push_back(t);
    }
  }
  Tensor logits = concat(logit_parts, 0);
  Tensor offsets = concat(offset_parts, 0);
  const std::size_t npos = targets.num_positive();
  const double norm = static_cast<double>(std::max<std::size_t>(1, npos));
  const FocalParams fp = cfg.focal;

  const double focal_value = focal_loss(logits.data(), labels, fp);
  Tensor focal = Tensor::record({1}, {focal_value}, {logits}, [labels, fp, norm](detail::Node& o) {
    auto& x = *o.parents[0];
    x.ensure_grad();
    const double go = o.grad[0];
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool y = labels[i] != 0;
      const double sgn = y ? 1.0 : -1.0;
      const double z = sgn * x.value[i];
      const double q = sigmoid_scalar(z);
      const double a = y ? fp.alpha : 1.0 - fp.alpha;
      const double one_q = 1.0 - q;
      // d/dz of -a (1-q)^g log q, with dq/dz = q (1-q).
      const double dz = -a * (-fp.gamma * q * std::pow(one_q, fp.gamma) * log_sigmoid(z) +
                               std::pow(one_q, fp.gamma + 1.0));
      x.grad[i] += go * sgn * dz / norm;
    }
  });

  LossBreakdown out;
  out.positives = npos;
  out.focal = focal_value;
  if (npos == 0) {
    out.total = focal;
    return out;
  }

  // Positive locations live at centre 0 in stride units: pred = [-a, b].
  double reg_sum = 0.0;
  auto od = offsets.data();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (!flat[i].positive) continue;
    reg_sum += diou_with_grad(-od[2 * i], od[2 * i + 1], -flat[i].offset_start,
                              flat[i].offset_end).loss;
  }
  const double reg_value = reg_sum / static_cast<double>(npos);
  Tensor reg = Tensor::record({1}, {reg_value}, {offsets}, [flat, npos](detail::Node& o) {
    auto& x = *o.parents[0];
    x.ensure_grad();
    const double go = o.grad[0] / static_cast<double>(npos);
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (!flat[i].positive) continue;
      const auto t = diou_with_grad(-x.value[2 * i], x.value[2 * i + 1], -flat[i].offset_start,
                                    flat[i].offset_end);
      x.grad[2 * i] += -go * t.d_start;
      x.grad[2 * i + 1] += go * t.d_end;
    }
  });
  out.regression = reg_value;
  out.total = add(focal, scale(reg, cfg.reg_weight));
  return out;
}

}  // namespace ovtal
