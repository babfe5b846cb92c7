#include "xvd/prompt_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "xvd/random.hpp"

namespace xvd {

std::string_view to_string(PromptOrigin o) { return o == PromptOrigin::Sampled ? "sampled" : "generated"; }

std::optional<PromptOrigin> parse_prompt_origin(std::string_view text) {
  std::string l(text);
  for (auto& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "sampled") return PromptOrigin::Sampled;
  if (l == "generated") return PromptOrigin::Generated;
  return std::nullopt;
}

std::string PipelineConfig::validate() const {
  if (k <= 0 || top_m <= 0 || keywords_per_cluster <= 0 || prompts_per_cluster <= 0 || min_keywords_in_prompt <= 0 ||
      final_sample <= 0 || mc_trials <= 0)
    return "all counts must be positive";
  if (!(coverage_target > 0.0 && coverage_target < 1.0)) return "coverage_target must lie in (0, 1)";
  return {};
}

// ---------------------------------------------------------------------------------------------

namespace {

void check_finite(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) throw Error(ErrorKind::InvalidArgument, "embedding matrix has non-finite entries");
}

}  // namespace

Reduction PcaReducer::reduce(const Eigen::MatrixXd& vectors) const {
  const Eigen::Index n = vectors.rows(), d = vectors.cols();
  if (n < 3 || d < 3) throw Error(ErrorKind::InvalidArgument, "PCA needs at least 3 rows and 3 columns");
  check_finite(vectors);

  Reduction r;
  r.mean = vectors.colwise().mean().transpose();
  const Eigen::MatrixXd centered = vectors.rowwise() - r.mean.transpose();
  const double denom = static_cast<double>(n - 1);

  // Top-3 eigenpairs of the covariance; through the n x n Gram matrix when d > n.
  Eigen::VectorXd values(3);
  Eigen::MatrixXd loadings(d, 3);
  if (d <= n) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig((centered.transpose() * centered) / denom);
    for (int c = 0; c < 3; ++c) {
      values(c) = eig.eigenvalues()(d - 1 - c);
      loadings.col(c) = eig.eigenvectors().col(d - 1 - c);
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig((centered * centered.transpose()) / denom);
    for (int c = 0; c < 3; ++c) {
      values(c) = eig.eigenvalues()(n - 1 - c);
      Eigen::VectorXd v = centered.transpose() * eig.eigenvectors().col(n - 1 - c);
      const double norm = v.norm();
      loadings.col(c) = norm > 0 ? Eigen::VectorXd(v / norm) : Eigen::VectorXd::Zero(d);
    }
  }

  const double top = std::max(values(0), 0.0);
  const double tol = std::max(top, 1.0) * 1e-10;
  r.components = Eigen::MatrixXd::Zero(3, d);
  for (int c = 0; c < 3; ++c) {
    if (!(values(c) > tol)) {
      r.variances(c) = 0.0;
      r.warnings.push_back("data rank below 3: component " + std::to_string(c + 1) + " padded with zeros");
      continue;
    }
    r.variances(c) = values(c);
    Eigen::VectorXd v = loadings.col(c);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < d; ++j)
      if (std::abs(v(j)) > std::abs(v(arg)) + 1e-12) arg = j;
    if (v(arg) < 0) v = -v;
    r.components.row(c) = v.transpose();
  }
  r.coords = centered * r.components.transpose();
  return r;
}

Reduction PrecomputedReducer::reduce(const Eigen::MatrixXd& vectors) const {
  if (coords_.cols() != 3) throw Error(ErrorKind::InvalidArgument, "precomputed coordinates must have 3 columns");
  if (vectors.size() != 0 && vectors.rows() != coords_.rows())
    throw Error(ErrorKind::InvalidArgument, "precomputed coordinate rows do not match the embedding rows");
  check_finite(coords_);
  Reduction r;
  r.coords = coords_;
  r.components = Eigen::MatrixXd::Zero(3, 0);
  r.variances = Eigen::Vector3d::Zero();
  return r;
}

Reduction reduce_embeddings(const Eigen::MatrixXd& vectors) { return PcaReducer().reduce(vectors); }

// ---------------------------------------------------------------------------------------------

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (k <= 0) throw Error(ErrorKind::InvalidArgument, "k must be positive");
  if (n < k) throw Error(ErrorKind::InsufficientPoints, std::to_string(n) + " points for k=" + std::to_string(k));
  check_finite(points);

  Rng rng(seed);
  Eigen::MatrixXd centroids(k, points.cols());

  // k-means++ seeding.
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target && d2(i) > 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
  }

  KMeansResult res;
  res.assignments.assign(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd dist(n);
  auto assign = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = (points.row(i) - centroids.row(c)).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      res.assignments[static_cast<std::size_t>(i)] = best;
      dist(i) = best_d;
    }
  };

  constexpr int kMaxIterations = 300;
  constexpr double kShiftTolerance = 1e-6;
  assign();
  for (int it = 1; it <= kMaxIterations; ++it) {
    res.iterations = it;
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = res.assignments[static_cast<std::size_t>(i)];
      next.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: reseed at the point farthest from its current centroid.
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!taken[static_cast<std::size_t>(i)] && (far < 0 || dist(i) > dist(far))) far = i;
      if (far < 0) far = 0;
      taken[static_cast<std::size_t>(far)] = true;
      next.row(c) = points.row(far);
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    assign();
    if (shift < kShiftTolerance) break;
  }
  res.centroids = centroids;
  res.inertia = dist.sum();
  return res;
}

TopClusters select_top_clusters(const std::vector<int>& assignments, int top_m, double coverage_target) {
  std::map<int, std::size_t> sizes;
  for (int a : assignments) ++sizes[a];
  std::vector<ClusterSize> all;
  for (auto [id, size] : sizes) all.push_back({id, size});
  std::stable_sort(all.begin(), all.end(), [](const ClusterSize& a, const ClusterSize& b) {
    return a.size != b.size ? a.size > b.size : a.cluster_id < b.cluster_id;
  });
  TopClusters out;
  const std::size_t take = std::min(all.size(), static_cast<std::size_t>(std::max(top_m, 0)));
  out.clusters.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
  std::size_t covered = 0;
  for (const auto& c : out.clusters) covered += c.size;
  out.coverage = assignments.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(assignments.size());
  if (out.coverage < coverage_target) {
    std::ostringstream msg;
    msg << "top " << take << " clusters cover " << out.coverage << " of prompts, below target " << coverage_target;
    out.warning = msg.str();
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "about", "above", "after", "again", "all", "also", "and", "any", "are", "around", "been", "before", "being",
      "below", "between", "both", "but", "can", "did", "does", "doing", "down", "during", "each", "few", "for",
      "from", "further", "had", "has", "have", "having", "her", "here", "hers", "him", "his", "how", "into", "its",
      "itself", "just", "more", "most", "nor", "not", "now", "off", "once", "only", "other", "our", "ours", "out",
      "over", "own", "same", "she", "should", "some", "such", "than", "that", "the", "their", "them", "then",
      "there", "these", "they", "this", "those", "through", "too", "under", "until", "very", "was", "were", "what",
      "when", "where", "which", "while", "who", "whom", "why", "will", "with", "you", "your",
  };
  return words;
}

std::vector<std::string> tokenize(std::string_view text, const std::set<std::string>& stopwords) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 3 && !stopwords.count(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c))
      cur.push_back(static_cast<char>(std::tolower(c)));
    else
      flush();
  }
  flush();
  return out;
}

std::vector<ClusterKeywords> tfidf_keywords(const std::vector<ClusterDocument>& clusters, int per_cluster,
                                            const std::set<std::string>& stopwords) {
  if (clusters.size() < 2) throw Error(ErrorKind::InvalidArgument, "tf-idf keywords need at least two clusters");
  std::vector<std::map<std::string, int>> tf(clusters.size());
  std::map<std::string, int> df;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (const auto& text : clusters[c].texts)
      for (auto& tok : tokenize(text, stopwords)) ++tf[c][tok];
    for (const auto& [term, count] : tf[c]) ++df[term];
  }
  const double n_docs = static_cast<double>(clusters.size());
  std::vector<ClusterKeywords> out;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    ClusterKeywords ck;
    ck.cluster_id = clusters[c].cluster_id;
    if (tf[c].empty()) {
      ck.warning = "cluster " + std::to_string(ck.cluster_id) + " has an empty document";
      out.push_back(std::move(ck));
      continue;
    }
    std::vector<Keyword> scored;
    for (const auto& [term, count] : tf[c]) {
      const int d = df[term];
      const double score = count * std::log((1.0 + n_docs) / (1.0 + d));
      if (score > 0) scored.push_back({term, score, count, d});
    }
    std::sort(scored.begin(), scored.end(), [](const Keyword& a, const Keyword& b) {
      return a.score != b.score ? a.score > b.score : a.term < b.term;
    });
    if (scored.size() > static_cast<std::size_t>(std::max(per_cluster, 0))) scored.resize(static_cast<std::size_t>(per_cluster));
    ck.keywords = std::move(scored);
    out.push_back(std::move(ck));
  }
  return out;
}

RepresentativeSelection select_representative_prompts(const std::vector<PromptText>& prompts,
                                                      const std::vector<Keyword>& keywords, int per_cluster,
                                                      int min_keywords, const std::set<std::string>& stopwords) {
  struct Ranked {
    const PromptText* prompt;
    int distinct;
    double score;
  };
  std::map<std::string, double> kw_score;
  for (const auto& kw : keywords) kw_score[kw.term] = kw.score;
  std::vector<Ranked> ranked;
  for (const auto& p : prompts) {
    const auto toks = tokenize(p.text, stopwords);
    std::set<std::string> hit;
    for (const auto& t : toks)
      if (kw_score.count(t)) hit.insert(t);
    if (static_cast<int>(hit.size()) < min_keywords) continue;
    double score = 0.0;
    for (const auto& t : hit) score += kw_score[t];
    ranked.push_back({&p, static_cast<int>(hit.size()), score});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.distinct != b.distinct) return a.distinct > b.distinct;
    if (a.score != b.score) return a.score > b.score;
    return a.prompt->id < b.prompt->id;
  });
  RepresentativeSelection out;
  const std::size_t want = static_cast<std::size_t>(std::max(per_cluster, 0));
  if (ranked.size() < want)
    out.warning = "only " + std::to_string(ranked.size()) + " prompts contain " + std::to_string(min_keywords) +
                  " cluster keywords; wanted " + std::to_string(want);
  for (std::size_t i = 0; i < ranked.size() && i < want; ++i) out.ids.push_back(ranked[i].prompt->id);
  return out;
}

// ---------------------------------------------------------------------------------------------

AugmentationRequest build_augmentation_request(int cluster_id, const std::vector<std::string>& keywords,
                                               const std::vector<std::string>& exemplars, int count) {
  if (exemplars.size() < 3) throw Error(ErrorKind::InsufficientExemplars, "three exemplar prompts are required");
  std::vector<std::string> chosen(exemplars.begin(), exemplars.begin() + 3);
  if (chosen[0] == chosen[1] || chosen[0] == chosen[2] || chosen[1] == chosen[2])
    throw Error(ErrorKind::InsufficientExemplars, "exemplar prompts must be distinct");
  if (count <= 0) throw Error(ErrorKind::InvalidArgument, "count must be positive");

  AugmentationRequest req;
  req.cluster_id = cluster_id;
  req.count = count;
  req.keywords = keywords;
  req.exemplars = chosen;
  std::ostringstream os;
  os << "Write " << count << " new text-to-video prompts for topic cluster " << cluster_id
     << ". Each prompt should read like a real user query, use several of the keywords below, "
        "and follow the style of the example prompts. Output one prompt per line.\n";
  os << "Keywords:\n";
  for (const auto& kw : keywords) os << "- " << kw << "\n";
  os << "Examples:\n";
  for (const auto& ex : chosen) os << "> " << ex << "\n";
  os << "Count: " << count << "\n";
  req.text = os.str();
  return req;
}

std::vector<PromptRecord> run_augmentation(LlmClient& client, const AugmentationRequest& request) {
  std::istringstream lines(client.complete(request.text));
  std::vector<PromptRecord> out;
  std::string line;
  while (std::getline(lines, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    PromptRecord r;
    r.id = std::to_string(request.cluster_id) + "-gen-" + std::to_string(out.size() + 1);
    r.text = line.substr(b, e - b + 1);
    r.cluster_id = request.cluster_id;
    r.origin = PromptOrigin::Generated;
    out.push_back(std::move(r));
  }
  return out;
}

std::string StubAugmentationClient::complete(const std::string& request) {
  std::vector<std::string> keywords;
  int count = 0;
  std::istringstream in(request);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("- ", 0) == 0) keywords.push_back(line.substr(2));
    if (line.rfind("Count: ", 0) == 0) count = std::stoi(line.substr(7));
  }
  if (keywords.empty()) keywords.push_back("scene");
  std::ostringstream out;
  for (int i = 0; i < count; ++i) {
    const auto& a = keywords[static_cast<std::size_t>(i) % keywords.size()];
    const auto& b = keywords[static_cast<std::size_t>(i + 1) % keywords.size()];
    out << "A cinematic shot of " << a << " with " << b << ", variation " << (i + 1) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------------------------

namespace {

constexpr std::string_view kTaggingMarker = "Prompt: ";

const std::map<std::string, ContentCategory>& content_lexicon() {
  static const std::map<std::string, ContentCategory> lex = [] {
    std::map<std::string, ContentCategory> m;
    auto add = [&](ContentCategory c, std::initializer_list<const char*> words) {
      for (const char* w : words) m.emplace(w, c);
    };
    add(ContentCategory::People, {"person", "people", "man", "woman", "men", "women", "child", "children", "boy",
                                  "girl", "baby", "dancer", "chef", "astronaut", "crowd", "player", "soldier"});
    add(ContentCategory::Animals, {"dog", "cat", "bird", "horse", "fish", "lion", "tiger", "elephant", "flamingo",
                                   "bear", "wolf", "rabbit", "puppy", "kitten", "cow", "deer", "monkey", "dragon"});
    add(ContentCategory::Vehicles, {"car", "truck", "bus", "train", "bicycle", "bike", "motorcycle", "boat", "ship",
                                    "airplane", "plane", "helicopter", "rocket", "spaceship"});
    add(ContentCategory::Plants, {"grass", "tree", "trees", "flower", "forest", "leaf", "leaves", "plant", "garden",
                                  "rose", "bamboo", "moss"});
    add(ContentCategory::Artifacts, {"robot", "sword", "clock", "book", "guitar", "phone", "computer", "lamp",
                                     "chair", "table", "cup", "camera", "statue", "toy"});
    add(ContentCategory::Food, {"bread", "cake", "pizza", "coffee", "fruit", "apple", "soup", "noodles", "sushi",
                                "burger", "tea", "chocolate", "food"});
    add(ContentCategory::Buildings, {"castle", "house", "building", "tower", "city", "temple", "church", "bridge",
                                     "skyscraper", "street", "village"});
    add(ContentCategory::Scenery, {"mountain", "ocean", "sea", "beach", "sky", "sunset", "river", "lake", "desert",
                                   "snow", "landscape", "waterfall", "clouds", "galaxy"});
    return m;
  }();
  return lex;
}

}  // namespace

std::string build_tagging_request(std::string_view prompt_text) {
  std::string req =
      "Tag the video prompt below with one or more spatial-content categories from: people, animals, vehicles, "
      "plants, artifacts, food, buildings, scenery. Answer with a comma-separated list of category names.\n";
  std::string one_line(prompt_text);
  std::replace(one_line.begin(), one_line.end(), '\n', ' ');
  req += kTaggingMarker;
  req += one_line;
  req += "\n";
  return req;
}

ContentLabelSet tag_content_categories(std::string_view prompt_text, LlmClient& client) {
  const std::string reply = client.complete(build_tagging_request(prompt_text));
  ContentLabelSet labels;
  std::size_t start = 0;
  while (start <= reply.size()) {
    std::size_t sep = reply.find_first_of(",\n", start);
    if (sep == std::string::npos) sep = reply.size();
    if (auto c = parse_content_category(std::string_view(reply).substr(start, sep - start))) labels.insert(*c);
    start = sep + 1;
  }
  if (labels.empty()) labels.insert(ContentCategory::Scenery);
  return labels;
}

std::string LexiconTaggingClient::complete(const std::string& request) {
  const auto at = request.find(kTaggingMarker);
  if (at == std::string::npos) return {};
  auto end = request.find('\n', at);
  if (end == std::string::npos) end = request.size();
  const std::string_view prompt = std::string_view(request).substr(at + kTaggingMarker.size(), end - at - kTaggingMarker.size());
  ContentLabelSet labels;
  const auto& lex = content_lexicon();
  for (auto tok : tokenize(prompt, {})) {
    auto it = lex.find(tok);
    if (it == lex.end() && tok.size() > 3 && tok.back() == 's') it = lex.find(tok.substr(0, tok.size() - 1));
    if (it != lex.end()) labels.insert(it->second);
  }
  std::string out;
  for (auto c : labels.items()) {
    if (!out.empty()) out += ", ";
    out += to_string(c);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

double balance_deviation(const std::vector<PromptRecord>& candidates, const std::vector<std::size_t>& subset,
                         const BalanceTargets& targets) {
  if (subset.empty()) return 0.0;
  const double size = static_cast<double>(subset.size());

  double cluster_term = 0.0;
  if (!targets.clusters.empty()) {
    std::map<int, double> counts;
    for (int id : targets.clusters) counts[id] = 0.0;
    double off_target = 0.0;
    for (auto i : subset) {
      auto it = counts.find(candidates[i].cluster_id.value_or(-1));
      if (it != counts.end())
        it->second += 1.0;
      else
        off_target += 1.0;
    }
    const double target = 1.0 / static_cast<double>(counts.size());
    for (const auto& [id, count] : counts) cluster_term += (count / size - target) * (count / size - target);
    cluster_term += (off_target / size) * (off_target / size);
  }

  std::array<double, kAllContentCategories.size()> mass{};
  double total_mass = 0.0;
  for (auto i : subset)
    for (auto c : candidates[i].content_labels.items()) {
      mass[static_cast<std::size_t>(c)] += 1.0;
      total_mass += 1.0;
    }
  double label_term = 0.0;
  const double label_target = 1.0 / static_cast<double>(mass.size());
  for (double m : mass) {
    const double share = total_mass > 0 ? m / total_mass : 0.0;
    label_term += (share - label_target) * (share - label_target);
  }

  double sampled = 0.0;
  for (auto i : subset) sampled += candidates[i].origin == PromptOrigin::Sampled ? 1.0 : 0.0;
  const double s_share = sampled / size;
  const double origin_term = (s_share - 0.5) * (s_share - 0.5) + ((1.0 - s_share) - 0.5) * ((1.0 - s_share) - 0.5);

  return cluster_term + label_term + origin_term;
}

std::vector<std::size_t> monte_carlo_trial_subset(std::uint64_t seed, std::uint64_t trial, std::size_t n, std::size_t k) {
  Rng rng = Rng::stream(seed, trial);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k && i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(k, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

BalanceResult monte_carlo_balance(const std::vector<PromptRecord>& candidates, const PipelineConfig& config,
                                  std::optional<BalanceTargets> targets) {
  if (config.final_sample <= 0 || config.mc_trials <= 0)
    throw Error(ErrorKind::InvalidArgument, "final_sample and mc_trials must be positive");
  const auto k = static_cast<std::size_t>(config.final_sample);
  if (candidates.size() < k)
    throw Error(ErrorKind::InsufficientCandidates,
                std::to_string(candidates.size()) + " candidates for a sample of " + std::to_string(k));
  for (const auto& c : candidates)
    if (!c.cluster_id) throw Error(ErrorKind::InvalidArgument, "candidate '" + c.id + "' has no cluster id");
  if (!targets) {
    std::set<int> ids;
    for (const auto& c : candidates) ids.insert(*c.cluster_id);
    targets = BalanceTargets{{ids.begin(), ids.end()}};
  }

  BalanceResult best;
  best.deviation = std::numeric_limits<double>::infinity();
  for (std::uint64_t t = 0; t < static_cast<std::uint64_t>(config.mc_trials); ++t) {
    auto subset = monte_carlo_trial_subset(config.seed, t, candidates.size(), k);
    const double j = balance_deviation(candidates, subset, *targets);
    if (j < best.deviation) {
      best.deviation = j;
      best.selected = std::move(subset);
      best.best_trial = t;
    }
  }
  return best;
}

}  // namespace xvd
