#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "pipeline_fixtures.hpp"
#include "xvd/prompt_io.hpp"
#include "xvd/prompt_pipeline.hpp"
#include "xvd/random.hpp"

namespace xvd {
namespace {

using testing::blobs;
using testing::cand;
using testing::eight_candidates;
using testing::oracle_deviation;
using testing::toy_corpus;

Eigen::MatrixXd random_matrix(Rng& rng, int n, int d) {
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal() * (1.0 + j);
  return m;
}

oracle::Matrix covariance(const Eigen::MatrixXd& x) {
  const auto n = x.rows(), d = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += x(i, j) / static_cast<double>(n);
  oracle::Matrix c(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b)
        c[a][b] += (x(i, a) - mean[a]) * (x(i, b) - mean[b]) / static_cast<double>(n - 1);
  return c;
}

void expect_matches_oracle(const Eigen::MatrixXd& x) {
  const auto red = reduce_embeddings(x);
  const auto [values, vectors] = oracle::jacobi_eigen(covariance(x));
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(red.variances(c), values[static_cast<std::size_t>(c)], 1e-8 * std::max(1.0, values[0]));
    // Same direction up to sign; the library fixes the sign so the largest loading is positive.
    std::vector<double> v = vectors[static_cast<std::size_t>(c)];
    const auto arg = std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (*arg < 0)
      for (auto& e : v) e = -e;
    for (std::size_t j = 0; j < v.size(); ++j) EXPECT_NEAR(red.components(c, static_cast<Eigen::Index>(j)), v[j], 1e-6);
  }
}

TEST(Pca, MatchesJacobiOracle) {
  Rng rng(10);
  expect_matches_oracle(random_matrix(rng, 50, 10));
  expect_matches_oracle(random_matrix(rng, 20, 4));
}

TEST(Pca, WideMatrixThroughGram) {
  Rng rng(12);
  expect_matches_oracle(random_matrix(rng, 8, 30));
}

TEST(Pca, ReconstructionErrorEqualsTrailingEigenvalues) {
  Rng rng(13);
  const Eigen::MatrixXd x = random_matrix(rng, 50, 10);
  const auto red = reduce_embeddings(x);
  const Eigen::MatrixXd centered = x.rowwise() - red.mean.transpose();
  const Eigen::MatrixXd recon = red.coords * red.components;
  const double err = (centered - recon).squaredNorm() / 49.0;
  const auto [values, vectors] = oracle::jacobi_eigen(covariance(x));
  double trailing = 0;
  for (std::size_t i = 3; i < values.size(); ++i) trailing += values[i];
  EXPECT_NEAR(err, trailing, 1e-8 * trailing);
}

TEST(Pca, IsotropicAxisAlignedIsPermutation) {
  // Points along the axes with distinct spreads: coordinates equal centered data up to order and sign.
  Eigen::MatrixXd x(6, 3);
  x << 3, 0, 0, -3, 0, 0, 0, 2, 0, 0, -2, 0, 0, 0, 1, 0, 0, -1;
  const auto red = reduce_embeddings(x);
  for (Eigen::Index i = 0; i < 6; ++i) {
    Eigen::Vector3d a = x.row(i).cwiseAbs();
    Eigen::Vector3d b = red.coords.row(i).cwiseAbs();
    EXPECT_NEAR((a - b).norm(), 0.0, 1e-12);
  }
}

TEST(Pca, RankOnePadsWithZeros) {
  Eigen::MatrixXd x(5, 4);
  for (int i = 0; i < 5; ++i) x.row(i) << i, 2 * i, -i, 0.5 * i;
  const auto red = reduce_embeddings(x);
  EXPECT_EQ(red.warnings.size(), 2u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(red.coords(i, 1), 0.0);
    EXPECT_EQ(red.coords(i, 2), 0.0);
  }
}

TEST(Pca, Preconditions) {
  EXPECT_THROW(reduce_embeddings(Eigen::MatrixXd::Zero(2, 5)), Error);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 4);
  x(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(reduce_embeddings(x), Error);
}

TEST(Pca, PrecomputedCoordinatesPassThrough) {
  Eigen::MatrixXd coords(3, 3);
  coords << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const auto red = PrecomputedReducer(coords).reduce(Eigen::MatrixXd::Zero(3, 7));
  EXPECT_EQ(red.coords, coords);
  EXPECT_THROW(PrecomputedReducer(coords).reduce(Eigen::MatrixXd::Zero(4, 7)), Error);
}

TEST(KMeans, RecoversSeparatedBlobs) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    std::vector<int> truth;
    const auto x = blobs(rng, truth);
    const auto res = kmeans(x, 3, seed);
    EXPECT_GE(oracle::adjusted_rand_index(truth, res.assignments), 0.99);
  }
}

TEST(KMeans, DeterministicForSeed) {
  Rng rng(7);
  const Eigen::MatrixXd x = random_matrix(rng, 200, 3);
  const auto a = kmeans(x, 8, 42), b = kmeans(x, 8, 42);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, NEqualsK) {
  Rng rng(1);
  const Eigen::MatrixXd x = random_matrix(rng, 6, 3);
  const auto res = kmeans(x, 6, 3);
  EXPECT_NEAR(res.inertia, 0.0, 1e-18);
  std::vector<int> a = res.assignments;
  std::sort(a.begin(), a.end());
  EXPECT_EQ(std::unique(a.begin(), a.end()) - a.begin(), 6);
}

TEST(KMeans, IdenticalPoints) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(10, 3, 2.5);
  const auto res = kmeans(x, 2, 9);
  EXPECT_EQ(res.inertia, 0.0);
  std::vector<int> a = res.assignments;
  std::sort(a.begin(), a.end());
  EXPECT_EQ(std::unique(a.begin(), a.end()) - a.begin(), 1);
}

TEST(KMeans, InsufficientPoints) {
  try {
    kmeans(Eigen::MatrixXd::Zero(2, 3), 3, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind, ErrorKind::InsufficientPoints);
  }
}

TEST(KMeans, InertiaNeverIncreasesWithK) {
  Rng rng(77);
  std::vector<int> truth;
  const auto x = blobs(rng, truth, 30);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 3; ++k) {
    const double inertia = kmeans(x, k, 5).inertia;
    EXPECT_LE(inertia, prev + 1e-9);
    prev = inertia;
  }
}

std::vector<int> sized(std::initializer_list<std::pair<int, int>> sizes) {
  std::vector<int> out;
  for (auto [id, n] : sizes) out.insert(out.end(), static_cast<std::size_t>(n), id);
  return out;
}

TEST(TopClusters, Examples) {
  const auto a = select_top_clusters(sized({{0, 50}, {1, 30}, {2, 20}}), 2, 0.89);
  ASSERT_EQ(a.clusters.size(), 2u);
  EXPECT_EQ(a.clusters[0].cluster_id, 0);
  EXPECT_EQ(a.clusters[1].cluster_id, 1);
  EXPECT_DOUBLE_EQ(a.coverage, 0.8);
  EXPECT_TRUE(a.warning);

  const auto b = select_top_clusters(sized({{0, 50}, {1, 30}, {2, 20}}), 5, 0.89);
  EXPECT_EQ(b.clusters.size(), 3u);
  EXPECT_DOUBLE_EQ(b.coverage, 1.0);
  EXPECT_FALSE(b.warning);

  const auto c = select_top_clusters(sized({{2, 20}, {7, 40}, {4, 40}}), 1, 0.0);
  EXPECT_EQ(c.clusters.at(0).cluster_id, 4);
}

TEST(TopClusters, CoverageMonotoneInTopM) {
  Rng rng(5);
  std::vector<int> assign(500);
  for (auto& a : assign) a = static_cast<int>(rng.below(40));
  double prev = 0;
  for (int m = 1; m <= 45; ++m) {
    const double cov = select_top_clusters(assign, m, 0.89).coverage;
    EXPECT_GE(cov, prev);
    prev = cov;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
}

TEST(Tokenize, LowercaseAlnumMinLengthStopwords) {
  EXPECT_EQ(tokenize("The RED dog, it's on a 4x4 truck!"), (std::vector<std::string>{"red", "dog", "4x4", "truck"}));
}

TEST(Tfidf, HandComputedTable) {
  // N = 3 cluster documents; "runs" and "fast" occur in two of them, every other term in one.
  const double idf1 = std::log(4.0 / 2.0), idf2 = std::log(4.0 / 3.0);
  const auto kw = tfidf_keywords(toy_corpus(), 10);
  ASSERT_EQ(kw.size(), 3u);

  auto terms = [](const ClusterKeywords& c, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n && i < c.keywords.size(); ++i) out.push_back(c.keywords[i].term);
    return out;
  };
  EXPECT_EQ(terms(kw[0], 2), (std::vector<std::string>{"dog", "chases"}));
  EXPECT_EQ(terms(kw[1], 2), (std::vector<std::string>{"blue", "car"}));
  EXPECT_EQ(terms(kw[2], 2), (std::vector<std::string>{"tall", "tree"}));

  EXPECT_NEAR(kw[0].keywords[0].score, 3 * idf1, 1e-12);
  EXPECT_NEAR(kw[0].keywords[1].score, idf1, 1e-12);
  EXPECT_NEAR(kw[1].keywords[0].score, 2 * idf1, 1e-12);
  EXPECT_NEAR(kw[2].keywords[1].score, 2 * idf1, 1e-12);
  // Full cluster-0 list: dog, then chases/red/toy tied, then fast/runs tied.
  EXPECT_EQ(terms(kw[0], 6), (std::vector<std::string>{"dog", "chases", "red", "toy", "fast", "runs"}));
  EXPECT_NEAR(kw[0].keywords[5].score, idf2, 1e-12);
  EXPECT_EQ(kw[0].keywords[5].df, 2);
}

TEST(Tfidf, DisjointVocabulariesStayLocal) {
  const auto kw = tfidf_keywords({{0, {"apple banana cherry"}}, {1, {"delta echo foxtrot"}}}, 10);
  const std::set<std::string> first = {"apple", "banana", "cherry"}, second = {"delta", "echo", "foxtrot"};
  ASSERT_EQ(kw[0].keywords.size(), 3u);
  for (const auto& k : kw[0].keywords) EXPECT_TRUE(first.count(k.term)) << k.term;
  for (const auto& k : kw[1].keywords) EXPECT_TRUE(second.count(k.term)) << k.term;
}

TEST(Tfidf, SharedTokenNeverOutranksUniqueOfEqualFrequency) {
  const auto kw = tfidf_keywords({{0, {"shared alpha"}}, {1, {"shared beta"}}, {2, {"gamma delta"}}}, 10);
  ASSERT_GE(kw[0].keywords.size(), 2u);
  EXPECT_EQ(kw[0].keywords[0].term, "alpha");
  EXPECT_EQ(kw[0].keywords[1].term, "shared");
}

TEST(Tfidf, TermsInEveryClusterScoreZeroAndAreDropped) {
  const auto kw = tfidf_keywords({{0, {"video cat"}}, {1, {"video dog"}}}, 10);
  for (const auto& c : kw)
    for (const auto& k : c.keywords) EXPECT_NE(k.term, "video");
}

TEST(Tfidf, NoStopwordsNoDuplicatesAndNeedsTwoClusters) {
  const auto kw = tfidf_keywords({{0, {"the cat and the other cat"}}, {1, {"with a dog from there"}}}, 10);
  for (const auto& c : kw) {
    std::set<std::string> seen;
    for (const auto& k : c.keywords) {
      EXPECT_FALSE(default_stopwords().count(k.term));
      EXPECT_TRUE(seen.insert(k.term).second);
    }
  }
  EXPECT_THROW(tfidf_keywords({{0, {"lonely"}}}, 10), Error);
}

TEST(Representatives, HandRankedFixture) {
  const std::vector<Keyword> kws = {{"castle", 3.0}, {"bridge", 2.0}, {"river", 1.0}, {"stone", 0.5}};
  const std::vector<PromptText> prompts = {
      {"p1", "a castle by the bridge"},           // 2 keywords, 5.0
      {"p2", "castle bridge over the river"},     // 3 keywords, 6.0
      {"p3", "river stone"},                      // 2 keywords, 1.5
      {"p4", "bridge across a river"},            // 2 keywords, 3.0
      {"p5", "castle castle near the river"},     // 2 keywords, 4.0
      {"p6", "only a castle"},                    // 1 keyword, excluded
  };
  const auto sel = select_representative_prompts(prompts, kws, 3, 2);
  EXPECT_EQ(sel.ids, (std::vector<std::string>{"p2", "p1", "p5"}));
  const auto all = select_representative_prompts(prompts, kws, 30, 2);
  EXPECT_EQ(all.ids, (std::vector<std::string>{"p2", "p1", "p5", "p4", "p3"}));
  EXPECT_TRUE(all.warning);
}

TEST(Augmentation, RequestContainsEveryItem) {
  std::vector<std::string> kws;
  for (int i = 0; i < 10; ++i) kws.push_back("keyword" + std::to_string(i));
  const std::vector<std::string> ex = {"a knight rides at dawn", "a cat sleeps on a roof", "rain over the harbour"};
  const auto req = build_augmentation_request(4, kws, ex);
  for (const auto& k : kws) EXPECT_NE(req.text.find(k), std::string::npos);
  for (const auto& e : ex) EXPECT_NE(req.text.find(e), std::string::npos);
  EXPECT_EQ(req.count, 30);
  EXPECT_EQ(build_augmentation_request(4, kws, ex).text, req.text);

  StubAugmentationClient stub;
  const auto recs = run_augmentation(stub, req);
  ASSERT_EQ(recs.size(), 30u);
  for (const auto& r : recs) {
    EXPECT_EQ(r.origin, PromptOrigin::Generated);
    EXPECT_EQ(r.cluster_id, 4);
    EXPECT_FALSE(r.text.empty());
  }
  EXPECT_EQ(recs[0].id, "4-gen-1");
}

TEST(Augmentation, DuplicateOrTooFewExemplarsRejected) {
  try {
    build_augmentation_request(1, {"a"}, {"same prompt", "same prompt", "other"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind, ErrorKind::InsufficientExemplars);
  }
  EXPECT_THROW(build_augmentation_request(1, {"a"}, {"one", "two"}), Error);
}

TEST(Tagging, LexiconStub) {
  LexiconTaggingClient lex;
  EXPECT_EQ(tag_content_categories("a dog running on grass", lex), (ContentLabelSet{ContentCategory::Animals, ContentCategory::Plants}));
  EXPECT_EQ(tag_content_categories("", lex), ContentLabelSet{ContentCategory::Scenery});
  EXPECT_EQ(tag_content_categories("a person eating bread near a castle", lex),
            (ContentLabelSet{ContentCategory::People, ContentCategory::Food, ContentCategory::Buildings}));
}

TEST(Balance, DeviationMatchesOracle) {
  const auto c = eight_candidates();
  oracle::for_each_combination(8, 4, [&](const std::vector<std::size_t>& s) {
    EXPECT_NEAR(balance_deviation(c, s, BalanceTargets{{0, 1}}), oracle_deviation(c, s), 1e-14);
  });
}

TEST(Balance, NeverBeatsBruteForceAndFindsItWithEnoughTrials) {
  const auto c = eight_candidates();
  double best = std::numeric_limits<double>::infinity();
  oracle::for_each_combination(8, 4, [&](const std::vector<std::size_t>& s) { best = std::min(best, oracle_deviation(c, s)); });

  PipelineConfig cfg;
  cfg.final_sample = 4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    cfg.mc_trials = 64;
    const auto r = monte_carlo_balance(c, cfg);
    EXPECT_GE(r.deviation, best - 1e-12);
    EXPECT_NEAR(r.deviation, oracle_deviation(c, r.selected), 1e-12);

    // Did the 64 trials include an optimal subset?
    bool covered = false;
    for (std::uint64_t t = 0; t < 64; ++t)
      covered = covered || std::abs(oracle_deviation(c, monte_carlo_trial_subset(seed, t, 8, 4)) - best) < 1e-12;
    if (covered) {
      EXPECT_NEAR(r.deviation, best, 1e-12);
    }

    cfg.mc_trials = 2000;
    EXPECT_NEAR(monte_carlo_balance(c, cfg).deviation, best, 1e-12);
  }
}

TEST(Balance, ExactlyUniformPoolReachesZero) {
  using C = ContentCategory;
  std::vector<PromptRecord> pool;
  // 8 prompts, one label each, clusters and origins alternate: the whole pool is perfectly balanced.
  for (int i = 0; i < 8; ++i)
    pool.push_back(cand("p" + std::to_string(i), i % 2, {static_cast<C>(i)}, i / 4 == 0 ? PromptOrigin::Sampled : PromptOrigin::Generated));
  for (int i = 0; i < 4; ++i) pool.push_back(cand("x" + std::to_string(i), 0, {C::People}, PromptOrigin::Sampled));
  PipelineConfig cfg;
  cfg.final_sample = 8;
  cfg.mc_trials = 20000;
  cfg.seed = 1;
  const auto r = monte_carlo_balance(pool, cfg);
  EXPECT_NEAR(r.deviation, 0.0, 1e-15);
}

TEST(Balance, DeterministicAndMonotoneInTrials) {
  Rng rng(3);
  std::vector<PromptRecord> pool;
  for (int i = 0; i < 60; ++i)
    pool.push_back(cand("p" + std::to_string(i), static_cast<int>(rng.below(5)),
                        {static_cast<ContentCategory>(rng.below(8))},
                        rng.below(2) ? PromptOrigin::Sampled : PromptOrigin::Generated));
  PipelineConfig cfg;
  cfg.final_sample = 20;
  cfg.seed = 11;
  double prev = std::numeric_limits<double>::infinity();
  for (int trials : {1, 10, 100, 1000}) {
    cfg.mc_trials = trials;
    const auto a = monte_carlo_balance(pool, cfg), b = monte_carlo_balance(pool, cfg);
    EXPECT_EQ(a.selected, b.selected);
    EXPECT_LE(a.deviation, prev);
    prev = a.deviation;
  }
}

TEST(Balance, InsufficientCandidates) {
  PipelineConfig cfg;
  try {
    monte_carlo_balance(eight_candidates(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind, ErrorKind::InsufficientCandidates);
  }
}

TEST(TrialSubset, SortedDistinctAndInRange) {
  for (std::uint64_t t = 0; t < 200; ++t) {
    const auto s = monte_carlo_trial_subset(9, t, 50, 10);
    ASSERT_EQ(s.size(), 10u);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
    EXPECT_LT(s.back(), 50u);
  }
}

TEST(PipelineConfig, DefaultsValidate) {
  PipelineConfig cfg;
  EXPECT_EQ(cfg.k, 80);
  EXPECT_EQ(cfg.top_m, 30);
  EXPECT_EQ(cfg.final_sample, 100);
  EXPECT_TRUE(cfg.validate().empty());
  cfg.top_m = 0;
  EXPECT_FALSE(cfg.validate().empty());
}

TEST(PromptIo, BinaryAndCsvEmbeddingsRoundTrip) {
  Rng rng(4);
  Eigen::MatrixXd m(5, 4);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = static_cast<float>(rng.normal());
  std::stringstream bin;
  write_embeddings_binary(bin, m);
  EXPECT_EQ(bin.str().substr(0, 4), "XVEM");
  EXPECT_EQ(read_embeddings_binary(bin), m);
  std::stringstream csv;
  write_matrix_csv(csv, m);
  EXPECT_TRUE(read_matrix_csv(csv).isApprox(m, 1e-6));
}

TEST(PromptIo, PromptsTsvRoundTrip) {
  std::vector<PromptRecord> ps = {cand("a", 3, {ContentCategory::People, ContentCategory::Food}, PromptOrigin::Sampled),
                                  cand("b", 1, {ContentCategory::Scenery}, PromptOrigin::Generated)};
  ps[0].text = "a chef slices bread";
  std::stringstream ss;
  write_prompts_tsv(ss, ps);
  const auto back = read_prompts_tsv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].text, "a chef slices bread");
  EXPECT_EQ(back[0].cluster_id, 3);
  EXPECT_EQ(back[0].content_labels, ps[0].content_labels);
  EXPECT_EQ(back[1].origin, PromptOrigin::Generated);
  EXPECT_EQ(format_labels(ps[0].content_labels), "people,food");
  EXPECT_EQ(parse_labels("people,food"), ps[0].content_labels);
}

}  // namespace
}  // namespace xvd
