#include "xvd/joint_loss.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>

#include "xvd/random.hpp"

namespace xvd::toy {

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
    throw Error(ErrorKind::InvalidArgument, "loss weights must be finite and non-negative");
  if (alpha == 0.0 && beta == 0.0) throw Error(ErrorKind::InvalidArgument, "alpha and beta cannot both be zero");
}

ToySequenceModel ToySequenceModel::init(int vocab, int dim, std::uint64_t seed) {
  if (vocab <= kFirstFiller || dim <= 0) throw Error(ErrorKind::InvalidArgument, "vocabulary or dimension too small");
  Rng rng(seed);
  auto fill = [&](Eigen::MatrixXd& m, double scale) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
  };
  ToySequenceModel m;
  m.E.resize(vocab, dim);
  m.A.resize(dim, dim);
  m.W.resize(vocab, dim);
  fill(m.E, 1.0);
  fill(m.A, 1.0 / std::sqrt(static_cast<double>(dim)));
  fill(m.W, 0.1);
  m.c = Eigen::VectorXd::Zero(dim);
  m.head.w.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) m.head.w(i) = 0.1 * rng.normal();
  m.head.b = 0.0;
  return m;
}

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

// log(1 + e^x) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_tokens(const ToySequenceModel& model, std::span<const int> tokens) {
  for (int t : tokens)
    if (t < 0 || t >= model.vocab()) throw Error(ErrorKind::InvalidArgument, "token id outside the vocabulary");
}

// Prefix means s_t and hidden states h_t.
void forward(const ToySequenceModel& model, std::span<const int> tokens, Eigen::MatrixXd& prefix_mean,
             Eigen::MatrixXd& hidden) {
  const Eigen::Index T = static_cast<Eigen::Index>(tokens.size());
  prefix_mean.resize(T, model.dim());
  hidden.resize(T, model.dim());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.dim());
  for (Eigen::Index t = 0; t < T; ++t) {
    sum += model.E.row(tokens[static_cast<std::size_t>(t)]).transpose();
    const Eigen::VectorXd s = sum / static_cast<double>(t + 1);
    prefix_mean.row(t) = s.transpose();
    hidden.row(t) = (model.A * s + model.c).array().tanh().matrix().transpose();
  }
}

}  // namespace

double lm_loss(const Eigen::MatrixXd& logits, std::span<const int> targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw Error(ErrorKind::LengthMismatch, std::to_string(logits.rows()) + " logit rows for " +
                                               std::to_string(targets.size()) + " targets");
  if (targets.empty()) throw Error(ErrorKind::InvalidArgument, "lm_loss needs at least one step");
  double total = 0.0;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const int y = targets[static_cast<std::size_t>(t)];
    if (y < 0 || y >= logits.cols()) throw Error(ErrorKind::InvalidArgument, "target outside the vocabulary");
    total += log_sum_exp(logits.row(t).transpose()) - logits(t, y);
  }
  return total;
}

ClsLoss cls_loss(const Eigen::VectorXd& h, const ClassifierHead& head, int y) {
  if (y != 0 && y != 1) throw Error(ErrorKind::InvalidArgument, "label must be 0 or 1");
  if (h.size() != head.w.size()) throw Error(ErrorKind::LengthMismatch, "hidden state and head sizes differ");
  const double logit = head.w.dot(h) + head.b;
  // -log s(z) = softplus(-z), -log(1 - s(z)) = softplus(z); no cancellation for large |z|.
  return ClsLoss{y == 1 ? softplus(-logit) : softplus(logit), sigmoid(logit)};
}

std::size_t locate_answer_hidden(std::span<const int> tokens, int answer_token) {
  const auto it = std::find(tokens.begin(), tokens.end(), answer_token);
  if (it == tokens.end()) throw Error(ErrorKind::MissingAnswerToken, "sequence has no answer token");
  if (it == tokens.begin()) throw Error(ErrorKind::NoPrecedingState, "answer token at position 0");
  return static_cast<std::size_t>(it - tokens.begin()) - 1;
}

Eigen::MatrixXd hidden_states(const ToySequenceModel& model, std::span<const int> tokens) {
  check_tokens(model, tokens);
  Eigen::MatrixXd s, h;
  forward(model, tokens, s, h);
  return h;
}

LossBreakdown joint_loss(const ToySequenceModel& model, std::span<const int> tokens, int y, const LossWeights& weights) {
  return grad_joint(model, tokens, y, weights).loss;
}

Gradients Gradients::zeros_like(const ToySequenceModel& model) {
  Gradients g;
  g.E = Eigen::MatrixXd::Zero(model.E.rows(), model.E.cols());
  g.A = Eigen::MatrixXd::Zero(model.A.rows(), model.A.cols());
  g.W = Eigen::MatrixXd::Zero(model.W.rows(), model.W.cols());
  g.c = Eigen::VectorXd::Zero(model.c.size());
  g.w = Eigen::VectorXd::Zero(model.head.w.size());
  g.b = 0.0;
  return g;
}

Gradients& Gradients::operator+=(const Gradients& o) {
  E += o.E;
  A += o.A;
  W += o.W;
  c += o.c;
  w += o.w;
  b += o.b;
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  E *= s;
  A *= s;
  W *= s;
  c *= s;
  w *= s;
  b *= s;
  return *this;
}

LossAndGradients grad_joint(const ToySequenceModel& model, std::span<const int> tokens, int y, const LossWeights& weights) {
  weights.validate();
  check_tokens(model, tokens);
  const std::size_t k = locate_answer_hidden(tokens, model.answer_token);
  const Eigen::Index T = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index d = model.dim();

  Eigen::MatrixXd s, h;
  forward(model, tokens, s, h);

  // Step t (0..T-2) predicts token t+1.
  const Eigen::MatrixXd logits = h.topRows(T - 1) * model.W.transpose();
  std::vector<int> targets(tokens.begin() + 1, tokens.end());

  LossAndGradients out;
  out.loss.lm_loss = lm_loss(logits, targets);
  const Eigen::VectorXd hk = h.row(static_cast<Eigen::Index>(k)).transpose();
  const ClsLoss cls = cls_loss(hk, model.head, y);
  out.loss.cls_loss = cls.loss;
  out.loss.p_hat = cls.p_hat;
  out.loss.total = weights.alpha * out.loss.lm_loss + weights.beta * out.loss.cls_loss;

  Gradients& g = out.grads;
  g = Gradients::zeros_like(model);
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(T, d);

  if (weights.alpha != 0.0) {
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      Eigen::VectorXd p = logits.row(t).transpose();
      p = (p.array() - p.maxCoeff()).exp().matrix();
      p /= p.sum();
      p(targets[static_cast<std::size_t>(t)]) -= 1.0;
      p *= weights.alpha;
      g.W += p * h.row(t);
      dh.row(t) += (model.W.transpose() * p).transpose();
    }
  }
  if (weights.beta != 0.0) {
    const double dlogit = weights.beta * (cls.p_hat - y);
    g.w = dlogit * hk;
    g.b = dlogit;
    dh.row(static_cast<Eigen::Index>(k)) += dlogit * model.head.w.transpose();
  }

  // Back through tanh, the affine map and the prefix mean.
  Eigen::VectorXd suffix = Eigen::VectorXd::Zero(d);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const Eigen::VectorXd dz = (dh.row(t).array() * (1.0 - h.row(t).array().square())).matrix().transpose();
    g.A += dz * s.row(t);
    g.c += dz;
    suffix += (model.A.transpose() * dz) / static_cast<double>(t + 1);
    g.E.row(tokens[static_cast<std::size_t>(t)]) += suffix.transpose();
  }
  return out;
}

namespace {

template <typename Fn>
void visit_params(Eigen::MatrixXd& E, Eigen::MatrixXd& A, Eigen::VectorXd& c, Eigen::MatrixXd& W, Eigen::VectorXd& w,
                  double& b, Fn&& fn) {
  for (Eigen::MatrixXd* m : {&E, &A}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index col = 0; col < m->cols(); ++col) fn((*m)(r, col));
  }
  for (Eigen::Index i = 0; i < c.size(); ++i) fn(c(i));
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index col = 0; col < W.cols(); ++col) fn(W(r, col));
  for (Eigen::Index i = 0; i < w.size(); ++i) fn(w(i));
  fn(b);
}

}  // namespace

std::vector<double> flatten(const ToySequenceModel& model) {
  ToySequenceModel copy = model;
  std::vector<double> out;
  visit_params(copy.E, copy.A, copy.c, copy.W, copy.head.w, copy.head.b, [&](double& v) { out.push_back(v); });
  return out;
}

void unflatten(ToySequenceModel& model, std::span<const double> params) {
  std::size_t i = 0;
  visit_params(model.E, model.A, model.c, model.W, model.head.w, model.head.b, [&](double& v) {
    if (i >= params.size()) throw Error(ErrorKind::LengthMismatch, "parameter vector too short");
    v = params[i++];
  });
  if (i != params.size()) throw Error(ErrorKind::LengthMismatch, "parameter vector too long");
}

std::vector<double> flatten(const Gradients& grads) {
  Gradients copy = grads;
  std::vector<double> out;
  visit_params(copy.E, copy.A, copy.c, copy.W, copy.w, copy.b, [&](double& v) { out.push_back(v); });
  return out;
}

std::vector<Example> make_planted_marker_corpus(std::size_t count, std::uint64_t seed, const CorpusConfig& config) {
  if (config.filler_tokens <= 0 || config.min_think < 1 || config.max_think < config.min_think ||
      config.min_evidence < 0 || config.max_evidence < config.min_evidence)
    throw Error(ErrorKind::InvalidArgument, "bad corpus configuration");
  Rng rng(seed);
  auto filler = [&] { return kFirstFiller + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.filler_tokens))); };
  auto length = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Example ex;
    ex.label = static_cast<int>(rng.below(2));
    ex.tokens.push_back(kThink);
    for (int j = length(config.min_think, config.max_think); j > 0; --j) ex.tokens.push_back(filler());
    if (ex.label == 1) ex.tokens.push_back(kDefectMarker);
    ex.tokens.push_back(kEvidence);
    for (int j = length(config.min_evidence, config.max_evidence); j > 0; --j) ex.tokens.push_back(filler());
    ex.tokens.push_back(kAnswer);
    ex.tokens.push_back(ex.label == 1 ? kVerdictAi : kVerdictReal);
    out.push_back(std::move(ex));
  }
  return out;
}

ToySplit make_toy_split(std::uint64_t seed, std::size_t train, std::size_t heldout, const CorpusConfig& config) {
  return ToySplit{make_planted_marker_corpus(train, Rng::stream(seed, 0).next(), config),
                  make_planted_marker_corpus(heldout, Rng::stream(seed, 1).next(), config)};
}

void validate_corpus(const std::vector<Example>& corpus, int vocab) {
  if (corpus.empty()) throw Error(ErrorKind::InvalidCorpus, "empty corpus");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& ex = corpus[i];
    const std::string at = "sequence " + std::to_string(i) + ": ";
    if (ex.label != 0 && ex.label != 1) throw Error(ErrorKind::InvalidCorpus, at + "label must be 0 or 1");
    for (int t : ex.tokens)
      if (t < 0 || t >= vocab) throw Error(ErrorKind::InvalidCorpus, at + "token outside the vocabulary");
    const auto it = std::find(ex.tokens.begin(), ex.tokens.end(), static_cast<int>(kAnswer));
    if (it == ex.tokens.end()) throw Error(ErrorKind::InvalidCorpus, at + "no answer token");
    if (it == ex.tokens.begin()) throw Error(ErrorKind::InvalidCorpus, at + "answer token at position 0");
  }
}

CurvePoint evaluate(const ToySequenceModel& model, const std::vector<Example>& corpus, const LossWeights& weights) {
  CurvePoint p;
  std::size_t correct = 0;
  for (const auto& ex : corpus) {
    const auto l = joint_loss(model, ex.tokens, ex.label, weights);
    p.lm_loss += l.lm_loss;
    p.cls_loss += l.cls_loss;
    p.total += l.total;
    correct += ((l.p_hat >= 0.5 ? 1 : 0) == ex.label) ? 1 : 0;
  }
  const double n = static_cast<double>(std::max<std::size_t>(corpus.size(), 1));
  p.lm_loss /= n;
  p.cls_loss /= n;
  p.total /= n;
  p.accuracy = static_cast<double>(correct) / n;
  return p;
}

TrainResult train_toy(const std::vector<Example>& corpus, const TrainConfig& config) {
  config.weights.validate();
  if (config.steps < 0 || !(config.learning_rate > 0.0))
    throw Error(ErrorKind::InvalidArgument, "steps must be non-negative and the learning rate positive");
  int max_token = kFirstFiller;
  for (const auto& ex : corpus)
    for (int t : ex.tokens) max_token = std::max(max_token, t);
  const int vocab = max_token + 1;
  validate_corpus(corpus, vocab);

  TrainResult res{ToySequenceModel::init(vocab, config.dim, config.seed), {}};
  const double n = static_cast<double>(corpus.size());
  for (int step = 0;; ++step) {
    CurvePoint point;
    point.step = step;
    Gradients total = Gradients::zeros_like(res.model);
    std::size_t correct = 0;
    for (const auto& ex : corpus) {
      auto lg = grad_joint(res.model, ex.tokens, ex.label, config.weights);
      point.lm_loss += lg.loss.lm_loss;
      point.cls_loss += lg.loss.cls_loss;
      point.total += lg.loss.total;
      correct += ((lg.loss.p_hat >= 0.5 ? 1 : 0) == ex.label) ? 1 : 0;
      total += lg.grads;
    }
    point.lm_loss /= n;
    point.cls_loss /= n;
    point.total /= n;
    point.accuracy = static_cast<double>(correct) / n;
    res.curve.push_back(point);
    if (step == config.steps) break;

    total *= config.learning_rate / n;
    res.model.E -= total.E;
    res.model.A -= total.A;
    res.model.c -= total.c;
    res.model.W -= total.W;
    res.model.head.w -= total.w;
    res.model.head.b -= total.b;
  }
  return res;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "step,lm_loss,cls_loss,total,accuracy\n";
  char buf[160];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.6g\n", p.step, p.lm_loss, p.cls_loss, p.total, p.accuracy);
    out << buf;
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");
constexpr char kParamsMagic[4] = {'X', 'V', 'T', 'M'};
constexpr std::uint32_t kParamsVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error(ErrorKind::Malformed, "truncated parameter file");
  return v;
}

}  // namespace

void write_params(std::ostream& out, const ToySequenceModel& model) {
  out.write(kParamsMagic, 4);
  put<std::uint32_t>(out, kParamsVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.answer_token));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(model.vocab()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(model.dim()));
  for (double v : flatten(model)) put<double>(out, v);
}

ToySequenceModel read_params(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kParamsMagic, 4) != 0) throw Error(ErrorKind::Malformed, "bad parameter magic");
  if (get<std::uint32_t>(in) != kParamsVersion) throw Error(ErrorKind::Malformed, "unsupported parameter version");
  const auto answer = get<std::uint32_t>(in);
  const auto vocab = get<std::uint64_t>(in);
  const auto dim = get<std::uint64_t>(in);
  if (vocab == 0 || dim == 0 || vocab > 1'000'000 || dim > 100'000) throw Error(ErrorKind::Malformed, "implausible sizes");
  ToySequenceModel m;
  m.answer_token = static_cast<int>(answer);
  const auto V = static_cast<Eigen::Index>(vocab), D = static_cast<Eigen::Index>(dim);
  m.E.resize(V, D);
  m.A.resize(D, D);
  m.c.resize(D);
  m.W.resize(V, D);
  m.head.w.resize(D);
  std::vector<double> flat(static_cast<std::size_t>(2 * V * D + D * D + 2 * D + 1));
  for (auto& v : flat) v = get<double>(in);
  unflatten(m, flat);
  return m;
}

}  // namespace xvd::toy
