#pragma once

#include <string>
#include <vector>

#include "xvd/evidence.hpp"
#include "xvd/random.hpp"

namespace xvd::testing {

inline DefectRecord make_defect(CategorySet cats, int start, int end, std::vector<PointPrompt> points,
                                std::string explanation = "the hand merges into the cup handle") {
  DefectRecord d;
  d.categories = cats;
  d.frame_range = {start, end};
  d.points = std::move(points);
  d.explanation = std::move(explanation);
  return d;
}

// 1280x720 at 30 fps, 150 frames, two defects listed out of chronological order.
inline VideoAnnotation make_ai_annotation(const std::string& id = "vid-ai-001") {
  VideoAnnotation a;
  a.video_id = id;
  a.source = "GenA";
  a.fps = 30.0;
  a.width = 1280;
  a.height = 720;
  a.frame_count = 150;
  a.verdict = Verdict::AIGenerated;
  a.anchor = AnchorType::NaturalRecorded;
  a.defects.push_back(make_defect({DefectCategory::TextureJitter}, 60, 89,
                                  {{70, 640, 360, PointLabel::Positive}, {62, 100, 100, PointLabel::Negative},
                                   {65, 320, 180, PointLabel::Positive}},
                                  "the brick texture flickers between frames"));
  a.defects.push_back(make_defect({DefectCategory::ObjectInconsistency, DefectCategory::InteractionAnomaly}, 30, 60,
                                  {{30, 960, 540, PointLabel::Positive}}));
  return a;
}

inline VideoAnnotation make_real_annotation(const std::string& id = "vid-real-001") {
  VideoAnnotation a;
  a.video_id = id;
  a.source = std::string(kRealSource);
  a.fps = 25.0;
  a.width = 640;
  a.height = 480;
  a.frame_count = 250;
  a.verdict = Verdict::Real;
  a.real_explanation = "motion, lighting and object identity stay consistent throughout";
  return a;
}

// Valid annotation with 1..max_defects defects, or a Real one.
inline VideoAnnotation random_annotation(Rng& rng, const std::string& id, int max_defects = 5) {
  static const char* kSources[] = {"GenA", "GenB", "GenC", "GenD"};
  static const double kRates[] = {24.0, 25.0, 30.0, 60.0, 29.97};
  VideoAnnotation a;
  a.video_id = id;
  a.fps = kRates[rng.below(5)];
  a.width = 64 + static_cast<int>(rng.below(1920));
  a.height = 64 + static_cast<int>(rng.below(1080));
  a.frame_count = 10 + static_cast<int>(rng.below(600));
  if (rng.below(4) == 0) {
    a.source = std::string(kRealSource);
    a.verdict = Verdict::Real;
    a.real_explanation = "no visible defect in clip " + id;
    return a;
  }
  a.source = kSources[rng.below(4)];
  a.verdict = Verdict::AIGenerated;
  a.anchor = rng.below(2) ? AnchorType::Handcrafted : AnchorType::NaturalRecorded;
  const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_defects)));
  for (int i = 0; i < n; ++i) {
    DefectRecord d;
    do {
      for (auto c : kAllDefectCategories)
        if (rng.below(4) == 0) d.categories.insert(c);
    } while (d.categories.empty());
    const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(a.frame_count)));
    const int e = s + static_cast<int>(rng.below(static_cast<std::uint64_t>(a.frame_count - s)));
    d.frame_range = {s, e};
    const int npts = 1 + static_cast<int>(rng.below(4));
    for (int j = 0; j < npts; ++j) {
      PointPrompt p;
      p.frame = s + static_cast<int>(rng.below(static_cast<std::uint64_t>(e - s + 1)));
      p.x = static_cast<int>(rng.below(static_cast<std::uint64_t>(a.width)));
      p.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(a.height)));
      p.label = (j == 0 || rng.below(3) != 0) ? PointLabel::Positive : PointLabel::Negative;
      d.points.push_back(p);
    }
    d.explanation = "defect " + std::to_string(i) + " seen near frame " + std::to_string(s);
    a.defects.push_back(std::move(d));
  }
  return a;
}

}  // namespace xvd::testing
