#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xvd/prompt_pipeline.hpp"

namespace xvd {

// Binary embedding matrix: magic "XVEM", uint64 rows, uint64 cols (little-endian), then
// rows*cols little-endian float32 values, row-major.
inline constexpr char kEmbeddingMagic[4] = {'X', 'V', 'E', 'M'};

Eigen::MatrixXd read_embeddings_binary(std::istream& in);
void write_embeddings_binary(std::ostream& out, const Eigen::MatrixXd& m);

// Comma-separated numbers, one row per line; a non-numeric first line is treated as a header.
Eigen::MatrixXd read_matrix_csv(std::istream& in);
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);

// Sniffs the magic and falls back to CSV.
Eigen::MatrixXd read_embeddings_file(const std::string& path);

// TSV columns: id, text, origin[, cluster_id[, labels]]; labels comma-separated. Optional header
// row starting with "id\t".
std::vector<PromptRecord> read_prompts_tsv(std::istream& in);
void write_prompts_tsv(std::ostream& out, const std::vector<PromptRecord>& prompts);

// Selection output: id, cluster_id, labels, origin.
void write_selection_tsv(std::ostream& out, const std::vector<PromptRecord>& selected);

std::string format_labels(ContentLabelSet labels);
ContentLabelSet parse_labels(const std::string& text);

}  // namespace xvd
