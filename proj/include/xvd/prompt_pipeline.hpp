#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "xvd/evidence.hpp"
#include "xvd/llm.hpp"

namespace xvd {

enum class PromptOrigin : std::uint8_t { Sampled, Generated };

std::string_view to_string(PromptOrigin o);
std::optional<PromptOrigin> parse_prompt_origin(std::string_view text);

struct PromptRecord {
  std::string id;
  std::string text;
  std::optional<std::vector<float>> embedding;
  std::optional<std::array<double, 3>> coords3;
  std::optional<int> cluster_id;
  ContentLabelSet content_labels;
  PromptOrigin origin = PromptOrigin::Sampled;
};

struct PipelineConfig {
  int k = 80;
  int top_m = 30;
  double coverage_target = 0.89;
  int keywords_per_cluster = 10;
  int prompts_per_cluster = 30;
  int min_keywords_in_prompt = 2;
  int final_sample = 100;
  int mc_trials = 20000;
  std::uint64_t seed = 0;

  // Empty when valid.
  std::string validate() const;
};

// ----- dimensionality reduction -----------------------------------------------------------

struct Reduction {
  Eigen::MatrixXd coords;      // n x 3
  Eigen::VectorXd mean;        // d (empty for precomputed coordinates)
  Eigen::MatrixXd components;  // 3 x d, rows are unit loadings (zero rows when rank-deficient)
  Eigen::Vector3d variances;   // eigenvalues of the sample covariance, descending
  std::vector<std::string> warnings;
};

class Reducer {
 public:
  virtual ~Reducer() = default;
  virtual Reduction reduce(const Eigen::MatrixXd& vectors) const = 0;
};

// Principal-component projection to three dimensions. Each component is oriented so that its
// largest-magnitude loading is positive.
class PcaReducer final : public Reducer {
 public:
  Reduction reduce(const Eigen::MatrixXd& vectors) const override;
};

// Ingests externally computed 3-D coordinates (e.g. from UMAP); ignores the input vectors
// apart from checking the row count.
class PrecomputedReducer final : public Reducer {
 public:
  explicit PrecomputedReducer(Eigen::MatrixXd coords) : coords_(std::move(coords)) {}
  Reduction reduce(const Eigen::MatrixXd& vectors) const override;

 private:
  Eigen::MatrixXd coords_;
};

Reduction reduce_embeddings(const Eigen::MatrixXd& vectors);

// ----- clustering -------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> assignments;
  Eigen::MatrixXd centroids;  // k x dims
  double inertia = 0.0;
  int iterations = 0;
};

// k-means++ seeding, then Lloyd iterations until the largest centroid shift is below 1e-6
// or 300 iterations. Throws InsufficientPoints when rows < k.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed);

struct ClusterSize {
  int cluster_id = 0;
  std::size_t size = 0;
};

struct TopClusters {
  std::vector<ClusterSize> clusters;  // size descending, lower id first on ties
  double coverage = 0.0;
  std::optional<std::string> warning;
};

TopClusters select_top_clusters(const std::vector<int>& assignments, int top_m, double coverage_target);

// ----- keywords -----------------------------------------------------------------------------

const std::set<std::string>& default_stopwords();

// Lowercase, split on non-alphanumerics, drop tokens shorter than 3 and stopwords.
std::vector<std::string> tokenize(std::string_view text, const std::set<std::string>& stopwords = default_stopwords());

struct ClusterDocument {
  int cluster_id = 0;
  std::vector<std::string> texts;
};

struct Keyword {
  std::string term;
  double score = 0.0;
  int tf = 0;
  int df = 0;
};

struct ClusterKeywords {
  int cluster_id = 0;
  std::vector<Keyword> keywords;
  std::optional<std::string> warning;
};

// One document per cluster; score = tf * ln((1 + N) / (1 + df)). Terms scoring zero (present in
// every cluster) are never keywords.
std::vector<ClusterKeywords> tfidf_keywords(const std::vector<ClusterDocument>& clusters, int per_cluster,
                                            const std::set<std::string>& stopwords = default_stopwords());

struct PromptText {
  std::string id;
  std::string text;
};

struct RepresentativeSelection {
  std::vector<std::string> ids;
  std::optional<std::string> warning;
};

RepresentativeSelection select_representative_prompts(const std::vector<PromptText>& prompts,
                                                      const std::vector<Keyword>& keywords, int per_cluster,
                                                      int min_keywords,
                                                      const std::set<std::string>& stopwords = default_stopwords());

// ----- augmentation -------------------------------------------------------------------------

struct AugmentationRequest {
  int cluster_id = 0;
  int count = 30;
  std::vector<std::string> keywords;
  std::vector<std::string> exemplars;
  std::string text;
};

// Throws InsufficientExemplars on fewer than three distinct exemplars.
AugmentationRequest build_augmentation_request(int cluster_id, const std::vector<std::string>& keywords,
                                               const std::vector<std::string>& exemplars, int count = 30);

// One prompt per non-empty response line, origin Generated, ids "<cluster>-gen-<n>".
std::vector<PromptRecord> run_augmentation(LlmClient& client, const AugmentationRequest& request);

// Emits `count` templated prompts built from the request's keywords.
class StubAugmentationClient final : public LlmClient {
 public:
  std::string complete(const std::string& request) override;
};

// ----- content tagging ----------------------------------------------------------------------

std::string build_tagging_request(std::string_view prompt_text);

// Always returns at least one label; falls back to Scenery.
ContentLabelSet tag_content_categories(std::string_view prompt_text, LlmClient& client);

// Answers tagging requests from a per-category keyword lexicon.
class LexiconTaggingClient final : public LlmClient {
 public:
  std::string complete(const std::string& request) override;
};

// ----- balanced selection -------------------------------------------------------------------

struct BalanceTargets {
  std::vector<int> clusters;  // uniform target over these ids
};

// Sum over factors (cluster, content-label mass, origin) of squared share deviations
// from uniform targets.
double balance_deviation(const std::vector<PromptRecord>& candidates, const std::vector<std::size_t>& subset,
                         const BalanceTargets& targets);

// The subset drawn by Monte Carlo trial `trial`, sorted ascending.
std::vector<std::size_t> monte_carlo_trial_subset(std::uint64_t seed, std::uint64_t trial, std::size_t n, std::size_t k);

struct BalanceResult {
  std::vector<std::size_t> selected;  // candidate indices, ascending
  double deviation = 0.0;
  std::uint64_t best_trial = 0;
};

// Throws InsufficientCandidates when fewer than config.final_sample candidates, InvalidArgument
// when a candidate lacks a cluster id. Cluster targets default to the distinct candidate clusters.
BalanceResult monte_carlo_balance(const std::vector<PromptRecord>& candidates, const PipelineConfig& config,
                                  std::optional<BalanceTargets> targets = std::nullopt);

}  // namespace xvd
