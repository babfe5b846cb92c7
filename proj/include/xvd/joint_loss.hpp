#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xvd/error.hpp"

namespace xvd::toy {

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;

  // Throws InvalidArgument for negative or all-zero weights.
  void validate() const;
};

// Ablation presets alpha:beta = 1:0, 1:1, 1:10.
inline constexpr LossWeights kLanguageOnly{1.0, 0.0};
inline constexpr LossWeights kBalanced{1.0, 1.0};
inline constexpr LossWeights kClassifierHeavy{1.0, 10.0};

struct ClassifierHead {
  Eigen::VectorXd w;
  double b = 0.0;
};

// Token ids shared by the model and the synthetic corpus; filler tokens follow kFirstFiller.
enum SpecialToken : int {
  kThink = 0,
  kEvidence = 1,
  kAnswer = 2,
  kDefectMarker = 3,
  kVerdictAi = 4,
  kVerdictReal = 5,
  kFirstFiller = 6,
};

// h_t = tanh(A * mean(E[y_0..y_t]) + c); LM logits at step t are W * h_t and predict y_{t+1}.
struct ToySequenceModel {
  Eigen::MatrixXd E;  // vocab x dim
  Eigen::MatrixXd A;  // dim x dim
  Eigen::VectorXd c;  // dim
  Eigen::MatrixXd W;  // vocab x dim
  ClassifierHead head;
  int answer_token = kAnswer;

  int vocab() const { return static_cast<int>(E.rows()); }
  int dim() const { return static_cast<int>(E.cols()); }

  static ToySequenceModel init(int vocab, int dim, std::uint64_t seed);
};

struct LossBreakdown {
  double lm_loss = 0.0;
  double cls_loss = 0.0;
  double total = 0.0;
  double p_hat = 0.5;
};

// sum_t -log softmax(logits_t)[targets_t]; rows of `logits` are time steps.
double lm_loss(const Eigen::MatrixXd& logits, std::span<const int> targets);

struct ClsLoss {
  double loss = 0.0;
  double p_hat = 0.5;
};

// Binary cross-entropy on sigmoid(w.h + b), evaluated in the stable logit form.
ClsLoss cls_loss(const Eigen::VectorXd& h, const ClassifierHead& head, int y);

// Index of the token immediately preceding the first answer token.
std::size_t locate_answer_hidden(std::span<const int> tokens, int answer_token = kAnswer);

// Hidden states, one row per position.
Eigen::MatrixXd hidden_states(const ToySequenceModel& model, std::span<const int> tokens);

LossBreakdown joint_loss(const ToySequenceModel& model, std::span<const int> tokens, int y, const LossWeights& weights);

struct Gradients {
  Eigen::MatrixXd E, A, W;
  Eigen::VectorXd c, w;
  double b = 0.0;

  static Gradients zeros_like(const ToySequenceModel& model);
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

struct LossAndGradients {
  LossBreakdown loss;
  Gradients grads;
};

LossAndGradients grad_joint(const ToySequenceModel& model, std::span<const int> tokens, int y, const LossWeights& weights);

// Flat parameter view in the order E, A, c, W, w, b (row-major matrices).
std::vector<double> flatten(const ToySequenceModel& model);
void unflatten(ToySequenceModel& model, std::span<const double> params);
std::vector<double> flatten(const Gradients& grads);

struct Example {
  std::vector<int> tokens;
  int label = 0;
};

struct CorpusConfig {
  int filler_tokens = 10;  // vocabulary = kFirstFiller + filler_tokens
  int min_think = 3;
  int max_think = 8;
  int min_evidence = 1;
  int max_evidence = 4;
};

// <think> filler... [marker iff y=1] <evidence> filler... <answer> verdict
std::vector<Example> make_planted_marker_corpus(std::size_t count, std::uint64_t seed, const CorpusConfig& config = {});

struct ToySplit {
  std::vector<Example> train;
  std::vector<Example> heldout;
};

// Train and held-out corpora drawn from independent streams of one seed.
ToySplit make_toy_split(std::uint64_t seed = 7, std::size_t train = 200, std::size_t heldout = 100,
                        const CorpusConfig& config = {});

// Throws InvalidCorpus for empty corpora or sequences whose answer token is missing or first.
void validate_corpus(const std::vector<Example>& corpus, int vocab);

struct CurvePoint {
  int step = 0;
  double lm_loss = 0.0;
  double cls_loss = 0.0;
  double total = 0.0;
  double accuracy = 0.0;
};

struct TrainConfig {
  LossWeights weights = kClassifierHeavy;
  int steps = 500;
  double learning_rate = 0.1;
  int dim = 16;
  std::uint64_t seed = 7;
};

struct TrainResult {
  ToySequenceModel model;
  std::vector<CurvePoint> curve;  // steps + 1 points: before the first update, then after each
};

// Mean loss over the corpus and the fraction of sequences with (p_hat >= 0.5) == label.
CurvePoint evaluate(const ToySequenceModel& model, const std::vector<Example>& corpus, const LossWeights& weights);

// Full-batch gradient descent on the mean per-sequence loss. Deterministic for a fixed seed.
TrainResult train_toy(const std::vector<Example>& corpus, const TrainConfig& config);

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

// Magic "XVTM", uint32 version, uint32 answer token, uint64 vocab, uint64 dim, then E, A, c, W,
// w, b as little-endian float64.
void write_params(std::ostream& out, const ToySequenceModel& model);
ToySequenceModel read_params(std::istream& in);

}  // namespace xvd::toy
