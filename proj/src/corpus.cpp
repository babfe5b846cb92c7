#include "xvd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace xvd {

std::vector<ChunkSpan> chunk_plan(double duration_s) {
  if (!(duration_s >= 0.0) || !std::isfinite(duration_s))
    throw Error(ErrorKind::InvalidArgument, "duration must be a non-negative number of seconds");
  std::vector<ChunkSpan> out;
  double cursor = 0.0;
  bool emitted = true;
  while (emitted) {
    emitted = false;
    for (int size : kChunkSizes) {
      if (static_cast<double>(size) > duration_s - cursor) continue;
      out.push_back(ChunkSpan{cursor, cursor + size, size});
      cursor += size;
      emitted = true;
    }
  }
  return out;
}

std::vector<std::size_t> semantic_filter(const SimilarityTable& table, double threshold) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& row = table[i];
    for (double v : row)
      if (!(v >= -1.0 && v <= 1.0))
        throw Error(ErrorKind::InvalidArgument, "similarity outside [-1, 1] in row " + std::to_string(i));
    if (!row.empty() && *std::max_element(row.begin(), row.end()) >= threshold) kept.push_back(i);
  }
  return kept;
}

StatsReport corpus_stats(const std::vector<VideoAnnotation>& annotations) {
  StatsReport r;
  for (auto c : kAllDefectCategories) r.defects_by_category[c] = 0;
  for (const auto& a : annotations) {
    ++r.videos_by_source[a.source];
    ++r.total_videos;
    for (const auto& d : a.defects) {
      ++r.total_defects;
      for (auto c : d.categories.items()) {
        ++r.defects_by_category[c];
        ++r.total_category_labels;
      }
    }
  }
  return r;
}

std::string format_stats(const StatsReport& report) {
  std::ostringstream os;
  os << "source\tcount\n";
  for (const auto& [source, count] : report.videos_by_source)
    if (source != kRealSource) os << source << '\t' << count << '\n';
  if (auto it = report.videos_by_source.find(std::string(kRealSource)); it != report.videos_by_source.end())
    os << it->first << '\t' << it->second << '\n';
  os << "total\t" << report.total_videos << "\n\n";
  os << "defect_category\tcount\n";
  for (auto c : kAllDefectCategories) os << to_string(c) << '\t' << report.defects_by_category.at(c) << '\n';
  os << "total_defects\t" << report.total_defects << '\n';
  os << "total_category_labels\t" << report.total_category_labels << '\n';
  return os.str();
}

}  // namespace xvd
