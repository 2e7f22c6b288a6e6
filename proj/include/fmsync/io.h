#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmsync/error.h"
#include "fmsync/geometry.h"

namespace fmsync {

// Malformed input file. The message names the file and line.
class ParseError : public DataError {
 public:
  ParseError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

// Matrix file: header "FMX <rows> <cols>", then rows*cols finite reals,
// whitespace separated, row-major. Values are written with 17 significant
// digits so a round trip is exact.
void write_matrix(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::istream& is, const std::string& source = "<stream>");
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

// Cloud file: header "XYZ <n>", then n lines "x y z".
void write_cloud(std::ostream& os, const Points& points);
Points read_cloud(std::istream& is, const std::string& source = "<stream>");
void write_cloud(const std::filesystem::path& path, const Points& points);
Points read_cloud(const std::filesystem::path& path);

// key=value lines; '#' starts a comment line. Keys must be unique.
class Manifest {
 public:
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void erase_prefix(const std::string& prefix);
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

void write_manifest(std::ostream& os, const Manifest& manifest);
Manifest read_manifest(std::istream& is, const std::string& source = "<stream>");
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
// Also checks that every value naming a .fmx or .xyz file exists relative to
// the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace fmsync
