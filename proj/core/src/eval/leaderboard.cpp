#include "rgcd/eval/leaderboard.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rgcd/error.hpp"

namespace rgcd::eval {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

Leaderboard parse_leaderboard(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  Leaderboard board;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cells = split(t);
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (!header) {
      if (cells.empty() || cells[0] != "model") {
        throw FormatError(where + "header must start with 'model'");
      }
      std::set<std::string> seen;
      for (std::size_t i = 1; i < cells.size(); ++i) {
        if (cells[i].empty()) throw FormatError(where + "empty column name");
        if (!seen.insert(cells[i]).second) {
          throw FormatError(where + "duplicate column '" + cells[i] + "'");
        }
        board.columns.push_back(cells[i]);
      }
      header = true;
      continue;
    }
    if (cells.size() != board.columns.size() + 1) {
      throw FormatError(where + "expected " + std::to_string(board.columns.size() + 1) +
                        " cells, got " + std::to_string(cells.size()));
    }
    LeaderboardRow row;
    row.model = cells[0];
    if (row.model.empty()) throw FormatError(where + "empty model name");
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i].empty()) continue;
      double v = 0.0;
      const char* b = cells[i].data();
      const char* e = b + cells[i].size();
      const auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e) {
        throw FormatError(where + "bad number '" + cells[i] + "' in column '" +
                          board.columns[i - 1] + "'");
      }
      row.values.emplace(board.columns[i - 1], v);
    }
    board.rows.push_back(std::move(row));
  }
  if (!header) throw FormatError("leaderboard has no header row");
  return board;
}

Leaderboard read_leaderboard(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_leaderboard(os.str());
}

std::vector<LeaderboardScore> recompute_leaderboard(const Leaderboard& board,
                                                    const AggregationRule& rule, double lo,
                                                    double hi) {
  rule.validate();
  if (!(hi > lo)) throw DomainError("leaderboard bounds need hi > lo");
  std::vector<LeaderboardScore> out;
  for (const auto& row : board.rows) {
    LeaderboardScore s;
    s.model = row.model;
    const auto q = row.values.find("quality_score");
    const auto m = row.values.find("semantic_score");
    if (q != row.values.end() && m != row.values.end()) {
      s.quality = q->second;
      s.semantic = m->second;
    } else {
      std::vector<DimensionScore> dims;
      for (const auto& [name, v] : row.values) dims.push_back(DimensionScore::make(name, v, lo, hi));
      try {
        s.quality = lo + (hi - lo) * quality_score(dims, rule);
        s.semantic = lo + (hi - lo) * semantic_score(dims, rule);
      } catch (const DomainError& e) {
        throw FormatError("model '" + row.model + "': " + e.what());
      }
    }
    s.total = total_score(s.quality, s.semantic, rule);
    if (const auto t = row.values.find("total_score"); t != row.values.end()) {
      s.published_total = t->second;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string leaderboard_csv(const std::vector<LeaderboardScore>& scores) {
  std::ostringstream os;
  os << "model,quality_score,semantic_score,total_score,published_total,difference\n";
  for (const auto& s : scores) {
    os << s.model << ',' << fmt(s.quality) << ',' << fmt(s.semantic) << ',' << fmt(s.total) << ',';
    if (s.published_total) os << fmt(*s.published_total) << ',' << fmt(s.total - *s.published_total);
    else os << ',';
    os << '\n';
  }
  return os.str();
}

}  // namespace rgcd::eval
