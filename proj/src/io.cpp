#include "fmsync/io.h"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fmsync {

ParseError::ParseError(const std::string& source, int line, const std::string& what)
    : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

// Whitespace tokenizer that remembers the line of each token.
class TokenReader {
 public:
  TokenReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

  bool next(std::string& tok) {
    tok.clear();
    int ch;
    while ((ch = is_.get()) != EOF) {
      if (ch == '\n') {
        if (!tok.empty()) {
          ++line_;
          tok_line_ = line_ - 1;
          return true;
        }
        ++line_;
      } else if (std::isspace(ch)) {
        if (!tok.empty()) {
          tok_line_ = line_;
          return true;
        }
      } else {
        tok.push_back(static_cast<char>(ch));
      }
    }
    // At end of input keep pointing at the last line that held a token.
    if (!tok.empty()) tok_line_ = line_;
    return !tok.empty();
  }

  int line() const { return tok_line_; }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, tok_line_, what); }

  double real() {
    std::string tok;
    if (!next(tok)) fail("unexpected end of file: fewer values than the header declares");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("cannot parse '" + tok + "' as a real number");
    if (!std::isfinite(v)) fail("non-finite value '" + tok + "'");
    return v;
  }

  long count(const char* what) {
    std::string tok;
    if (!next(tok)) fail(std::string("missing ") + what + " in header");
    long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0)
      fail(std::string("invalid ") + what + " '" + tok + "'");
    return v;
  }

  void expect_magic(const char* magic) {
    std::string tok;
    if (!next(tok) || tok != magic) fail(std::string("malformed header: expected '") + magic + "'");
  }

  void expect_end() {
    std::string tok;
    if (next(tok)) fail("count mismatch: more values than the header declares");
  }

 private:
  std::istream& is_;
  std::string source_;
  int line_ = 1;
  int tok_line_ = 1;
};

void format_real(std::ostream& os, double v) {
  char buf[32];
  int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  os.write(buf, n);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  os << "FMX " << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      format_real(os, m(i, j));
    }
    os << "\n";
  }
}

Eigen::MatrixXd read_matrix(std::istream& is, const std::string& source) {
  TokenReader reader(is, source);
  reader.expect_magic("FMX");
  const long rows = reader.count("row count");
  const long cols = reader.count("column count");
  Eigen::MatrixXd m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = reader.real();
  reader.expect_end();
  return m;
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  auto out = open_out(path);
  write_matrix(out, m);
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_matrix(in, path.string());
}

void write_cloud(std::ostream& os, const Points& points) {
  os << "XYZ " << points.rows() << "\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (int d = 0; d < 3; ++d) {
      if (d) os << ' ';
      format_real(os, points(i, d));
    }
    os << "\n";
  }
}

Points read_cloud(std::istream& is, const std::string& source) {
  TokenReader reader(is, source);
  reader.expect_magic("XYZ");
  const long n = reader.count("point count");
  Points p(n, 3);
  for (long i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) p(i, d) = reader.real();
  reader.expect_end();
  return p;
}

void write_cloud(const std::filesystem::path& path, const Points& points) {
  auto out = open_out(path);
  write_cloud(out, points);
}

Points read_cloud(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_cloud(in, path.string());
}

const std::string& Manifest::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw DataError("manifest has no key '" + key + "'");
  return it->second;
}

std::string Manifest::get_or(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int Manifest::get_int(const std::string& key) const {
  const std::string& v = get(key);
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw DataError("manifest key '" + key + "' is not an integer: '" + v + "'");
  return out;
}

double Manifest::get_double(const std::string& key) const {
  const std::string& v = get(key);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw DataError("manifest key '" + key + "' is not a finite real: '" + v + "'");
  return out;
}

void Manifest::erase_prefix(const std::string& prefix) {
  for (auto it = values_.begin(); it != values_.end();) {
    if (it->first.starts_with(prefix))
      it = values_.erase(it);
    else
      ++it;
  }
}

void write_manifest(std::ostream& os, const Manifest& manifest) {
  for (const auto& [k, v] : manifest.entries()) os << k << "=" << v << "\n";
}

Manifest read_manifest(std::istream& is, const std::string& source) {
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected key=value");
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source, lineno, "empty key");
    if (m.has(key)) throw ParseError(source, lineno, "duplicate key '" + key + "'");
    m.set(key, value);
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  auto out = open_out(path);
  write_manifest(out, manifest);
}

Manifest read_manifest(const std::filesystem::path& path) {
  auto in = open_in(path);
  Manifest m = read_manifest(in, path.string());
  const auto dir = path.parent_path();
  for (const auto& [k, v] : m.entries()) {
    if (v.ends_with(".fmx") || v.ends_with(".xyz")) {
      if (!std::filesystem::exists(dir / v))
        throw DataError("manifest key '" + k + "' references missing file '" + (dir / v).string() + "'");
    }
  }
  return m;
}

}  // namespace fmsync
