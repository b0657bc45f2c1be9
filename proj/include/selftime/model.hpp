#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selftime/functional.hpp"
#include "selftime/relation.hpp"
#include "selftime/rng.hpp"
#include "selftime/tensor.hpp"

namespace selftime::model {

template <class Real>
using NamedTensor = std::pair<std::string, nn::BasicTensor<Real>>;

inline constexpr std::size_t kEmbeddingDim = 64;
inline constexpr std::size_t kHiddenDim = 256;
inline constexpr std::size_t kMinInputLength = 16;
inline constexpr double kLeakySlope = 0.01;
inline constexpr double kNormEpsilon = 1e-12;

// Conv1D(in, out, 4, 2, 1) + BatchNorm + ReLU.
template <class Real>
struct ConvBlock {
  nn::BasicTensor<Real> weight, bias, gamma, beta, running_mean, running_var;
};

// Four conv blocks, average pooling over time, L2 normalization.
// Accepts full series and pieces alike; the same weights serve both.
template <class Real>
class BasicEncoder {
 public:
  static constexpr std::array<std::size_t, 5> kChannels{1, 8, 16, 32, 64};

  explicit BasicEncoder(RngStream& rng);

  // batch [B,1,T] with T >= 16 -> [B,64], unit-norm rows.
  nn::BasicTensor<Real> encode(const nn::BasicTensor<Real>& batch, bool training);

  std::vector<NamedTensor<Real>> named_parameters(const std::string& prefix = "backbone") const;
  std::vector<NamedTensor<Real>> named_buffers(const std::string& prefix = "backbone") const;

 private:
  std::array<ConvBlock<Real>, 4> blocks_;
};

enum class HeadKind { inter, intra };

// Linear(128,256) + BatchNorm + LeakyReLU, then Linear(256, outputs).
// Emits logits; sigmoid / softmax are applied by the losses or for reporting.
template <class Real>
class BasicRelationHead {
 public:
  BasicRelationHead(HeadKind kind, std::size_t outputs, RngStream& rng);

  // representation [B,128] -> logits [B,outputs]
  nn::BasicTensor<Real> forward(const nn::BasicTensor<Real>& representation, bool training);

  // Logits for rows [z[left[m]], z[right[m]]] without materializing the
  // concatenation: the first layer is split into its two 64-column halves.
  nn::BasicTensor<Real> forward_pairs(const nn::BasicTensor<Real>& z, std::span<const std::uint32_t> left,
                                      std::span<const std::uint32_t> right, bool training);

  HeadKind kind() const { return kind_; }
  std::size_t outputs() const { return outputs_; }

  std::vector<NamedTensor<Real>> named_parameters(const std::string& prefix) const;
  std::vector<NamedTensor<Real>> named_buffers(const std::string& prefix) const;

 private:
  nn::BasicTensor<Real> finish(const nn::BasicTensor<Real>& hidden, bool training);

  HeadKind kind_;
  std::size_t outputs_;
  nn::BasicTensor<Real> fc1_weight_, fc1_bias_, bn_gamma_, bn_beta_, bn_mean_, bn_var_, fc2_weight_, fc2_bias_;
};

template <class Real>
class BasicSelfTimeModel {
 public:
  BasicSelfTimeModel(int classes, std::uint64_t seed);

  BasicEncoder<Real>& backbone() { return backbone_; }
  BasicRelationHead<Real>& head_inter() { return head_inter_; }
  BasicRelationHead<Real>& head_intra() { return head_intra_; }
  int classes() const { return classes_; }

  std::vector<NamedTensor<Real>> named_parameters() const;
  std::vector<NamedTensor<Real>> named_buffers() const;
  // Parameters followed by buffers.
  std::vector<NamedTensor<Real>> state() const;
  std::vector<nn::BasicTensor<Real>> parameters() const;

 private:
  int classes_;
  BasicEncoder<Real> backbone_;
  BasicRelationHead<Real> head_inter_;
  BasicRelationHead<Real> head_intra_;
};

using Encoder = BasicEncoder<float>;
using RelationHead = BasicRelationHead<float>;
using SelfTimeModel = BasicSelfTimeModel<float>;

// Series rows (all of one length) as a [B,1,T] tensor.
template <class Real>
nn::BasicTensor<Real> series_batch(std::span<const double> values, std::size_t rows, std::size_t length);

// [za, zb] row-wise.
template <class Real>
nn::BasicTensor<Real> relation_representation(const nn::BasicTensor<Real>& za, const nn::BasicTensor<Real>& zb);

struct LossReport {
  double loss_inter = 0.0;
  double loss_intra = 0.0;
  double loss_total = 0.0;
  double inter_accuracy = 0.0;
  double intra_accuracy = 0.0;  // Class ACC
  std::uint64_t inter_scores = 0;
  std::uint64_t intra_scores = 0;
};

template <class Real>
struct BranchLoss {
  nn::BasicTensor<Real> loss;
  double accuracy = 0.0;
  std::uint64_t scores = 0;
};

// Binary cross-entropy over every positive and negative view pair.
template <class Real>
BranchLoss<Real> inter_loss(const relation::InterSampleBatch& batch, BasicEncoder<Real>& encoder,
                            BasicRelationHead<Real>& head, bool training);

// Cross-entropy over temporal relation labels of piece pairs.
template <class Real>
BranchLoss<Real> intra_loss(std::span<const relation::PiecePair> pairs, BasicEncoder<Real>& encoder,
                            BasicRelationHead<Real>& head, bool training);

// inter + intra_weight * intra. Throws NumericError on non-finite input.
template <class Real>
nn::BasicTensor<Real> total_loss(const nn::BasicTensor<Real>& inter, const nn::BasicTensor<Real>& intra,
                                 Real intra_weight = Real(1));

template <class Real>
struct StepLoss {
  nn::BasicTensor<Real> loss;
  LossReport report;
};

template <class Real>
StepLoss<Real> selftime_loss(BasicSelfTimeModel<Real>& model, const relation::InterSampleBatch& batch,
                             std::span<const relation::PiecePair> pairs, bool training);

}  // namespace selftime::model
