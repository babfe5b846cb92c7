#pragma once

#include <map>
#include <string>
#include <vector>

#include "xvd/evidence.hpp"

namespace xvd {

inline constexpr int kChunkSizes[] = {30, 20, 10, 5};

struct ChunkSpan {
  double start_s = 0.0;
  double end_s = 0.0;
  int duration = 0;
  friend bool operator==(const ChunkSpan&, const ChunkSpan&) = default;
};

// Left to right in passes over 30, 20, 10, 5: each pass emits every size that still fits, largest
// first. A tail shorter than 5 s is discarded.
std::vector<ChunkSpan> chunk_plan(double duration_s);

// rows = chunks, columns = prompts; entries must lie in [-1, 1].
using SimilarityTable = std::vector<std::vector<double>>;

inline constexpr double kDefaultSimilarityThreshold = 0.22;

// Keeps chunk i iff max_j table[i][j] >= threshold. Throws InvalidArgument on out-of-range entries.
std::vector<std::size_t> semantic_filter(const SimilarityTable& table, double threshold = kDefaultSimilarityThreshold);

struct StatsReport {
  std::map<std::string, std::size_t> videos_by_source;
  std::map<DefectCategory, std::size_t> defects_by_category;  // all six keys present
  std::size_t total_videos = 0;
  std::size_t total_defects = 0;
  std::size_t total_category_labels = 0;
};

// A defect tagged with c categories adds one to each of them.
StatsReport corpus_stats(const std::vector<VideoAnnotation>& annotations);

// Two tab-separated tables: "source  count" (Real last) and "defect_category  count".
std::string format_stats(const StatsReport& report);

}  // namespace xvd
