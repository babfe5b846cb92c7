#include "xvd/prompt_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xvd {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorKind::Malformed, what); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string chomp(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace

Eigen::MatrixXd read_embeddings_binary(std::istream& in) {
  char magic[4];
  std::uint64_t rows = 0, cols = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, kEmbeddingMagic, 4) != 0) malformed("bad embedding magic");
  if (!in.read(reinterpret_cast<char*>(&rows), 8) || !in.read(reinterpret_cast<char*>(&cols), 8))
    malformed("truncated embedding header");
  if (rows > (1ULL << 31) || cols > (1ULL << 20)) malformed("implausible embedding dimensions");
  std::vector<float> buf(static_cast<std::size_t>(rows * cols));
  if (!buf.empty() && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4)))
    malformed("truncated embedding data");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = buf[static_cast<std::size_t>(r * cols + c)];
  return m;
}

void write_embeddings_binary(std::ostream& out, const Eigen::MatrixXd& m) {
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows()), cols = static_cast<std::uint64_t>(m.cols());
  out.write(kEmbeddingMagic, 4);
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = static_cast<float>(m(r, c));
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
}

Eigen::MatrixXd read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    std::vector<double> row;
    bool numeric = true;
    for (const auto& cell : split(line, ',')) {
      double v = 0;
      if (!parse_double(cell, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;
      malformed("non-numeric CSV cell on line " + std::to_string(lineno));
    }
    if (!rows.empty() && row.size() != rows.front().size()) malformed("ragged CSV row on line " + std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  char buf[40];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", m(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_embeddings_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::memcmp(magic, kEmbeddingMagic, 4) == 0;
  in.clear();
  in.seekg(0);
  return binary ? read_embeddings_binary(in) : read_matrix_csv(in);
}

std::string format_labels(ContentLabelSet labels) {
  std::string out;
  for (auto c : labels.items()) {
    if (!out.empty()) out += ',';
    out += to_string(c);
  }
  return out;
}

ContentLabelSet parse_labels(const std::string& text) {
  ContentLabelSet out;
  if (text.empty()) return out;
  for (const auto& item : split(text, ',')) {
    auto c = parse_content_category(item);
    if (!c) malformed("unknown content label '" + item + "'");
    out.insert(*c);
  }
  return out;
}

std::vector<PromptRecord> read_prompts_tsv(std::istream& in) {
  std::vector<PromptRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("id\t", 0) == 0) continue;
    const auto cells = split(line, '\t');
    if (cells.size() < 3) malformed("prompt TSV line " + std::to_string(lineno) + " needs id, text, origin");
    PromptRecord r;
    r.id = cells[0];
    r.text = cells[1];
    auto origin = parse_prompt_origin(cells[2]);
    if (!origin) malformed("unknown origin '" + cells[2] + "' on line " + std::to_string(lineno));
    r.origin = *origin;
    if (cells.size() > 3 && !cells[3].empty()) {
      int id = 0;
      auto [ptr, ec] = std::from_chars(cells[3].data(), cells[3].data() + cells[3].size(), id);
      if (ec != std::errc() || ptr != cells[3].data() + cells[3].size())
        malformed("bad cluster id on line " + std::to_string(lineno));
      r.cluster_id = id;
    }
    if (cells.size() > 4) r.content_labels = parse_labels(cells[4]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_prompts_tsv(std::ostream& out, const std::vector<PromptRecord>& prompts) {
  out << "id\ttext\torigin\tcluster_id\tlabels\n";
  for (const auto& p : prompts)
    out << p.id << '\t' << p.text << '\t' << to_string(p.origin) << '\t'
        << (p.cluster_id ? std::to_string(*p.cluster_id) : std::string()) << '\t' << format_labels(p.content_labels)
        << '\n';
}

void write_selection_tsv(std::ostream& out, const std::vector<PromptRecord>& selected) {
  out << "id\tcluster_id\tlabels\torigin\n";
  for (const auto& p : selected)
    out << p.id << '\t' << (p.cluster_id ? std::to_string(*p.cluster_id) : std::string()) << '\t'
        << format_labels(p.content_labels) << '\t' << to_string(p.origin) << '\n';
}

}  // namespace xvd
