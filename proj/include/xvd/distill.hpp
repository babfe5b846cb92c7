#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xvd/evidence.hpp"
#include "xvd/llm.hpp"
#include "xvd/tagseq.hpp"

namespace xvd {

// Label definitions handed to the teacher model and used in task prompts.
const std::string& default_label_definitions();

// Instruction asking for the full <think>/<evidence>/<answer> chain.
const std::string& default_task_prompt();

struct DistillRequest {
  std::string video_id;
  std::string evidence;     // ground-truth tags, canonical tag syntax
  std::string definitions;
  std::string instruction;
  std::string text;         // full request sent to the client
};

// The trace whose evidence tags are exactly the ground truth: defects ordered by start frame,
// located_frame = frame of the training point, one normalized point per block. Real videos get
// one placeholder block carrying the real-video explanation.
ReasoningTrace ground_truth_trace(const VideoAnnotation& a);

// Throws InvalidArgument listing violations when the annotation is invalid.
DistillRequest build_distill_request(const VideoAnnotation& a, const std::string& definitions = default_label_definitions());

// Sends the request and Strict-parses the reply. Throws Malformed when the reply does not parse.
ReasoningTrace run_distillation(LlmClient& client, const DistillRequest& request);

// Echoes the ground-truth evidence from the request, wrapped in a step-by-step think section.
class StubDistillClient final : public LlmClient {
 public:
  std::string complete(const std::string& request) override;
};

struct FieldDiff {
  std::optional<std::size_t> block;
  std::string field;
  std::string expected;
  std::string actual;
};

struct VerifyReport {
  std::vector<FieldDiff> diffs;
  bool pass() const { return diffs.empty(); }
};

// Every evidence tag must equal the ground truth except explanations; points may differ by one
// unit per coordinate. Blocks pair with defects after sorting both by start time.
VerifyReport verify_trace_against_gt(const ReasoningTrace& trace, const VideoAnnotation& a);

// Chronological groups of at most max_cues defects; real videos pass through unchanged.
std::vector<VideoAnnotation> split_sample(const VideoAnnotation& a, int max_cues = 3);

struct SftRecord {
  std::string video_id;
  std::string prompt;
  std::string target;
  int label = 0;
};

// Throws Unserializable when a view's trace cannot be serialized or fails to re-verify.
std::vector<SftRecord> emit_sft_records(const std::vector<VideoAnnotation>& views,
                                        const std::string& task_prompt = default_task_prompt());

nlohmann::json sft_to_json(const SftRecord& r);

}  // namespace xvd
