#include "selftime/model.hpp"

#include <cmath>

#include "selftime/errors.hpp"

namespace selftime::model {

namespace {

template <class Real>
nn::BasicTensor<Real> uniform_tensor(nn::Shape shape, double bound, RngStream& rng) {
  std::vector<Real> values(nn::shape_numel(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Real& v : values) v = static_cast<Real>(dist(rng.engine()));
  return nn::BasicTensor<Real>(std::move(shape), std::move(values), true);
}

template <class Real>
nn::BasicTensor<Real> filled(std::size_t n, Real value, bool requires_grad) {
  return nn::BasicTensor<Real>(nn::Shape{n}, std::vector<Real>(n, value), requires_grad);
}

}  // namespace

template <class Real>
BasicEncoder<Real>::BasicEncoder(RngStream& rng) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::size_t cin = kChannels[i], cout = kChannels[i + 1];
    const double bound = std::sqrt(1.0 / static_cast<double>(cin * 4));
    auto& b = blocks_[i];
    b.weight = uniform_tensor<Real>({cout, cin, 4}, bound, rng);
    b.bias = uniform_tensor<Real>({cout}, bound, rng);
    b.gamma = filled<Real>(cout, Real(1), true);
    b.beta = filled<Real>(cout, Real(0), true);
    b.running_mean = filled<Real>(cout, Real(0), false);
    b.running_var = filled<Real>(cout, Real(1), false);
  }
}

template <class Real>
nn::BasicTensor<Real> BasicEncoder<Real>::encode(const nn::BasicTensor<Real>& batch, bool training) {
  if (!batch.defined() || batch.rank() != 3 || batch.dim(1) != 1) {
    throw InvalidArgument("encode: expected input of shape [B,1,T]");
  }
  if (batch.dim(2) < kMinInputLength) {
    throw InvalidArgument("encode: input length " + std::to_string(batch.dim(2)) + " is below the minimum of " +
                          std::to_string(kMinInputLength));
  }
  nn::BasicTensor<Real> h = batch;
  for (auto& b : blocks_) {
    h = nn::conv1d(h, b.weight, b.bias, 2, 1);
    h = nn::batch_norm(h, b.gamma, b.beta, b.running_mean, b.running_var, training);
    h = nn::relu(h);
  }
  return nn::l2_normalize(nn::global_avg_pool(h), static_cast<Real>(kNormEpsilon));
}

template <class Real>
std::vector<NamedTensor<Real>> BasicEncoder<Real>::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor<Real>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string conv = prefix + ".conv" + std::to_string(i + 1);
    const std::string bn = prefix + ".bn" + std::to_string(i + 1);
    out.emplace_back(conv + ".weight", blocks_[i].weight);
    out.emplace_back(conv + ".bias", blocks_[i].bias);
    out.emplace_back(bn + ".gamma", blocks_[i].gamma);
    out.emplace_back(bn + ".beta", blocks_[i].beta);
  }
  return out;
}

template <class Real>
std::vector<NamedTensor<Real>> BasicEncoder<Real>::named_buffers(const std::string& prefix) const {
  std::vector<NamedTensor<Real>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string bn = prefix + ".bn" + std::to_string(i + 1);
    out.emplace_back(bn + ".running_mean", blocks_[i].running_mean);
    out.emplace_back(bn + ".running_var", blocks_[i].running_var);
  }
  return out;
}

template <class Real>
BasicRelationHead<Real>::BasicRelationHead(HeadKind kind, std::size_t outputs, RngStream& rng)
    : kind_(kind), outputs_(outputs) {
  if (outputs < 1) throw InvalidArgument("relation head needs at least one output");
  const std::size_t in = 2 * kEmbeddingDim;
  const double b1 = std::sqrt(1.0 / static_cast<double>(in));
  const double b2 = std::sqrt(1.0 / static_cast<double>(kHiddenDim));
  fc1_weight_ = uniform_tensor<Real>({kHiddenDim, in}, b1, rng);
  fc1_bias_ = uniform_tensor<Real>({kHiddenDim}, b1, rng);
  bn_gamma_ = filled<Real>(kHiddenDim, Real(1), true);
  bn_beta_ = filled<Real>(kHiddenDim, Real(0), true);
  bn_mean_ = filled<Real>(kHiddenDim, Real(0), false);
  bn_var_ = filled<Real>(kHiddenDim, Real(1), false);
  fc2_weight_ = uniform_tensor<Real>({outputs, kHiddenDim}, b2, rng);
  fc2_bias_ = uniform_tensor<Real>({outputs}, b2, rng);
}

template <class Real>
nn::BasicTensor<Real> BasicRelationHead<Real>::finish(const nn::BasicTensor<Real>& hidden, bool training) {
  auto h = nn::batch_norm(hidden, bn_gamma_, bn_beta_, bn_mean_, bn_var_, training);
  h = nn::leaky_relu(h, static_cast<Real>(kLeakySlope));
  return nn::linear(h, fc2_weight_, fc2_bias_);
}

template <class Real>
nn::BasicTensor<Real> BasicRelationHead<Real>::forward(const nn::BasicTensor<Real>& representation, bool training) {
  if (!representation.defined() || representation.rank() != 2 || representation.dim(1) != 2 * kEmbeddingDim) {
    throw InvalidArgument("relation head: expected [B,128] input");
  }
  return finish(nn::linear(representation, fc1_weight_, fc1_bias_), training);
}

template <class Real>
nn::BasicTensor<Real> BasicRelationHead<Real>::forward_pairs(const nn::BasicTensor<Real>& z,
                                                             std::span<const std::uint32_t> left,
                                                             std::span<const std::uint32_t> right, bool training) {
  if (!z.defined() || z.rank() != 2 || z.dim(1) != kEmbeddingDim) {
    throw InvalidArgument("relation head: expected [N,64] embeddings");
  }
  auto first = nn::linear(z, nn::slice_columns(fc1_weight_, 0, kEmbeddingDim), fc1_bias_);
  auto second = nn::linear(z, nn::slice_columns(fc1_weight_, kEmbeddingDim, 2 * kEmbeddingDim), nn::BasicTensor<Real>());
  return finish(nn::gather_add(first, left, second, right), training);
}

template <class Real>
std::vector<NamedTensor<Real>> BasicRelationHead<Real>::named_parameters(const std::string& prefix) const {
  return {{prefix + ".fc1.weight", fc1_weight_}, {prefix + ".fc1.bias", fc1_bias_},
          {prefix + ".bn.gamma", bn_gamma_},     {prefix + ".bn.beta", bn_beta_},
          {prefix + ".fc2.weight", fc2_weight_}, {prefix + ".fc2.bias", fc2_bias_}};
}

template <class Real>
std::vector<NamedTensor<Real>> BasicRelationHead<Real>::named_buffers(const std::string& prefix) const {
  return {{prefix + ".bn.running_mean", bn_mean_}, {prefix + ".bn.running_var", bn_var_}};
}

namespace {
RngStream init_stream(std::uint64_t seed, std::string_view part) {
  return RngStream(seed, derive_stream("init", {tag_hash(part)}));
}
}  // namespace

template <class Real>
BasicSelfTimeModel<Real>::BasicSelfTimeModel(int classes, std::uint64_t seed)
    : classes_(classes),
      backbone_([&] {
        auto rng = init_stream(seed, "backbone");
        return BasicEncoder<Real>(rng);
      }()),
      head_inter_([&] {
        auto rng = init_stream(seed, "head_inter");
        return BasicRelationHead<Real>(HeadKind::inter, 1, rng);
      }()),
      head_intra_([&] {
        if (classes < 2) throw InvalidArgument("model: need at least 2 temporal relation classes");
        auto rng = init_stream(seed, "head_intra");
        return BasicRelationHead<Real>(HeadKind::intra, static_cast<std::size_t>(classes), rng);
      }()) {}

template <class Real>
std::vector<NamedTensor<Real>> BasicSelfTimeModel<Real>::named_parameters() const {
  auto out = backbone_.named_parameters("backbone");
  for (auto& p : head_inter_.named_parameters("head_inter")) out.push_back(p);
  for (auto& p : head_intra_.named_parameters("head_intra")) out.push_back(p);
  return out;
}

template <class Real>
std::vector<NamedTensor<Real>> BasicSelfTimeModel<Real>::named_buffers() const {
  auto out = backbone_.named_buffers("backbone");
  for (auto& p : head_inter_.named_buffers("head_inter")) out.push_back(p);
  for (auto& p : head_intra_.named_buffers("head_intra")) out.push_back(p);
  return out;
}

template <class Real>
std::vector<NamedTensor<Real>> BasicSelfTimeModel<Real>::state() const {
  auto out = named_parameters();
  for (auto& b : named_buffers()) out.push_back(b);
  return out;
}

template <class Real>
std::vector<nn::BasicTensor<Real>> BasicSelfTimeModel<Real>::parameters() const {
  std::vector<nn::BasicTensor<Real>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <class Real>
nn::BasicTensor<Real> series_batch(std::span<const double> values, std::size_t rows, std::size_t length) {
  if (values.size() != rows * length) throw InvalidArgument("series_batch: value count does not match rows x length");
  std::vector<Real> data(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) data[i] = static_cast<Real>(values[i]);
  return nn::BasicTensor<Real>(nn::Shape{rows, 1, length}, std::move(data));
}

template <class Real>
nn::BasicTensor<Real> relation_representation(const nn::BasicTensor<Real>& za, const nn::BasicTensor<Real>& zb) {
  return nn::concat_columns(za, zb);
}

template <class Real>
BranchLoss<Real> inter_loss(const relation::InterSampleBatch& batch, BasicEncoder<Real>& encoder,
                            BasicRelationHead<Real>& head, bool training) {
  const std::size_t rows = batch.batch_size * batch.views_per_sample;
  auto z = encoder.encode(series_batch<Real>(batch.views, rows, batch.length), training);
  auto logits = head.forward_pairs(z, batch.left, batch.right, training);
  std::vector<Real> labels(batch.labels.begin(), batch.labels.end());

  BranchLoss<Real> out;
  out.loss = nn::bce_with_logits(logits, std::span<const Real>(labels));
  std::size_t correct = 0;
  for (std::size_t m = 0; m < labels.size(); ++m) {
    const Real x = logits.data()[m];
    if ((labels[m] > Real(0.5) && x > Real(0)) || (labels[m] < Real(0.5) && x < Real(0))) ++correct;
  }
  out.scores = labels.size();
  out.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  return out;
}

template <class Real>
BranchLoss<Real> intra_loss(std::span<const relation::PiecePair> pairs, BasicEncoder<Real>& encoder,
                            BasicRelationHead<Real>& head, bool training) {
  if (pairs.empty()) throw InvalidArgument("intra_loss: no piece pairs");
  const std::size_t n = pairs.size();
  const std::size_t len = pairs[0].piece_u.size();
  std::vector<double> pieces(2 * n * len);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pairs[i];
    if (p.piece_u.size() != len || p.piece_v.size() != len) throw InvalidArgument("intra_loss: piece lengths differ");
    if (p.label < 0 || static_cast<std::size_t>(p.label) >= head.outputs()) {
      throw InvalidArgument("intra_loss: label " + std::to_string(p.label) + " outside [0, " +
                            std::to_string(head.outputs()) + ")");
    }
    std::copy(p.piece_u.begin(), p.piece_u.end(), pieces.begin() + static_cast<std::ptrdiff_t>(i * len));
    std::copy(p.piece_v.begin(), p.piece_v.end(), pieces.begin() + static_cast<std::ptrdiff_t>((n + i) * len));
    labels[i] = p.label;
  }
  auto z = encoder.encode(series_batch<Real>(pieces, 2 * n, len), training);
  std::vector<std::uint32_t> first(n), second(n);
  for (std::size_t i = 0; i < n; ++i) {
    first[i] = static_cast<std::uint32_t>(i);
    second[i] = static_cast<std::uint32_t>(n + i);
  }
  auto repr = relation_representation(nn::gather_rows(z, first), nn::gather_rows(z, second));
  auto logits = head.forward(repr, training);

  BranchLoss<Real> out;
  out.loss = nn::ce_loss(logits, std::span<const int>(labels));
  const std::size_t classes = head.outputs();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real* row = logits.data().data() + i * classes;
    const auto best = static_cast<int>(std::max_element(row, row + classes) - row);
    if (best == labels[i]) ++correct;
  }
  out.scores = n;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

template <class Real>
nn::BasicTensor<Real> total_loss(const nn::BasicTensor<Real>& inter, const nn::BasicTensor<Real>& intra,
                                 Real intra_weight) {
  if (!std::isfinite(static_cast<double>(inter.item())) || !std::isfinite(static_cast<double>(intra.item()))) {
    throw NumericError("total_loss: non-finite branch loss (inter=" + std::to_string(inter.item()) +
                       ", intra=" + std::to_string(intra.item()) + ")");
  }
  return nn::add(inter, nn::scale(intra, intra_weight));
}

template <class Real>
StepLoss<Real> selftime_loss(BasicSelfTimeModel<Real>& model, const relation::InterSampleBatch& batch,
                             std::span<const relation::PiecePair> pairs, bool training) {
  auto inter = inter_loss(batch, model.backbone(), model.head_inter(), training);
  auto intra = intra_loss(pairs, model.backbone(), model.head_intra(), training);
  StepLoss<Real> out;
  out.loss = total_loss(inter.loss, intra.loss);
  out.report.loss_inter = inter.loss.item();
  out.report.loss_intra = intra.loss.item();
  out.report.loss_total = out.loss.item();
  out.report.inter_accuracy = inter.accuracy;
  out.report.intra_accuracy = intra.accuracy;
  out.report.inter_scores = inter.scores;
  out.report.intra_scores = intra.scores;
  return out;
}

#define SELFTIME_INSTANTIATE(R)                                                                                    \
  template class BasicEncoder<R>;                                                                                  \
  template class BasicRelationHead<R>;                                                                             \
  template class BasicSelfTimeModel<R>;                                                                            \
  template nn::BasicTensor<R> series_batch<R>(std::span<const double>, std::size_t, std::size_t);                  \
  template nn::BasicTensor<R> relation_representation(const nn::BasicTensor<R>&, const nn::BasicTensor<R>&);       \
  template BranchLoss<R> inter_loss(const relation::InterSampleBatch&, BasicEncoder<R>&, BasicRelationHead<R>&,    \
                                    bool);                                                                         \
  template BranchLoss<R> intra_loss(std::span<const relation::PiecePair>, BasicEncoder<R>&, BasicRelationHead<R>&, \
                                    bool);                                                                         \
  template nn::BasicTensor<R> total_loss(const nn::BasicTensor<R>&, const nn::BasicTensor<R>&, R);                 \
  template StepLoss<R> selftime_loss(BasicSelfTimeModel<R>&, const relation::InterSampleBatch&,                    \
                                     std::span<const relation::PiecePair>, bool);

SELFTIME_INSTANTIATE(float)
SELFTIME_INSTANTIATE(double)

#undef SELFTIME_INSTANTIATE

}  // namespace selftime::model
