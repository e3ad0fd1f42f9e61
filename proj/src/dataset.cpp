#include "pgam/dataset.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pgam/error.hpp"

namespace pgam {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

// RFC 4180 style: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

ColumnMapping ColumnMapping::uci_hourly() {
  ColumnMapping m;
  m.source = {"hr", "temp", "windspeed", "weekday", "workingday"};
  m.scale = {1.0, 41.0, 67.0, 1.0, 1.0};
  m.target = "cnt";
  m.year = "yr";
  return m;
}

ColumnMapping ColumnMapping::parse_schema(const std::string& text) {
  ColumnMapping m = uci_hourly();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ParseError, "schema line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key == "target") {
      m.target = value;
      continue;
    }
    if (key == "year") {
      m.year = value;
      continue;
    }
    bool is_scale = false;
    if (key.size() > 6 && key.ends_with(".scale")) {
      key.resize(key.size() - 6);
      is_scale = true;
    }
    auto f = parse_feature(key);
    if (!f) throw Error(ErrorCode::ParseError, "schema line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (is_scale) {
      double s = 0;
      if (!parse_double(value, s) || s == 0.0)
        throw Error(ErrorCode::ParseError, "schema line " + std::to_string(lineno) + ": bad scale '" + value + "'");
      m.scale[index_of(*f)] = s;
    } else {
      m.source[index_of(*f)] = value;
    }
  }
  return m;
}

ColumnMapping ColumnMapping::from_schema_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open schema file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

Dataset::Dataset(std::array<std::vector<double>, kFeatureCount> columns, std::vector<double> target)
    : columns_(std::move(columns)), target_(std::move(target)) {
  for (const auto& c : columns_) {
    if (c.size() != target_.size())
      throw Error(ErrorCode::InvalidArgument, "dataset columns differ in length");
  }
  if (target_.empty()) throw Error(ErrorCode::EmptyResult, "empty result: dataset has no rows");
}

FeatureRecord Dataset::row(std::size_t i) const {
  FeatureRecord r{};
  for (std::size_t f = 0; f < kFeatureCount; ++f) r[f] = columns_[f][i];
  return r;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  std::array<std::vector<double>, kFeatureCount> cols;
  for (std::size_t f = 0; f < kFeatureCount; ++f)
    cols[f].assign(columns_[f].begin() + static_cast<std::ptrdiff_t>(begin),
                   columns_[f].begin() + static_cast<std::ptrdiff_t>(end));
  return Dataset(std::move(cols),
                 std::vector<double>(target_.begin() + static_cast<std::ptrdiff_t>(begin),
                                     target_.begin() + static_cast<std::ptrdiff_t>(end)));
}

std::string Dataset::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) mix(columns_[f][i]);
    mix(target_[i]);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Dataset load_dataset(const std::filesystem::path& path, const ColumnMapping& mapping,
                     const std::optional<std::string>& year_filter) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "missing file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyResult, "empty result: no header in " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = split_csv_line(line);

  auto find_column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error(ErrorCode::MissingColumn, "missing column '" + name + "' in " + path.string());
  };

  std::array<std::size_t, kFeatureCount> feature_col{};
  for (Feature f : kAllFeatures) {
    const std::string& src = mapping.source[index_of(f)];
    if (src.empty())
      throw Error(ErrorCode::MissingColumn, "missing column: no source mapped for " + std::string(feature_name(f)));
    feature_col[index_of(f)] = find_column(src);
  }
  std::size_t target_col = find_column(mapping.target);
  std::optional<std::size_t> year_col;
  if (year_filter) {
    if (mapping.year.empty())
      throw Error(ErrorCode::MissingColumn, "missing column: year filter requested but no year column mapped");
    year_col = find_column(mapping.year);
  }

  std::array<std::vector<double>, kFeatureCount> cols;
  std::vector<double> target;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                             std::to_string(header.size()) + " fields, got " +
                                             std::to_string(fields.size()));
    if (year_col) {
      double want = 0, have = 0;
      bool numeric = parse_double(*year_filter, want) && parse_double(fields[*year_col], have);
      if (numeric ? want != have : fields[*year_col] != *year_filter) continue;
    }
    auto cell = [&](std::size_t col) {
      double v = 0;
      if (!parse_double(fields[col], v))
        throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": non-numeric cell '" +
                                               fields[col] + "' in column '" + header[col] + "'");
      return v;
    };
    for (Feature f : kAllFeatures)
      cols[index_of(f)].push_back(cell(feature_col[index_of(f)]) * mapping.scale[index_of(f)]);
    double y = cell(target_col);
    if (y < 0) throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": negative target");
    target.push_back(y);
  }
  if (target.empty()) throw Error(ErrorCode::EmptyResult, "empty result after filtering " + path.string());
  return Dataset(std::move(cols), std::move(target));
}

std::pair<Dataset, Dataset> temporal_split(const Dataset& ds, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "train fraction must lie in (0, 1)");
  const auto n = ds.size();
  // Tolerance absorbs representation error, e.g. 8645 * 0.8.
  auto n_train = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * train_fraction - 1e-9));
  if (n_train == 0) throw Error(ErrorCode::EmptyResult, "train split is empty");
  if (n_train >= n) throw Error(ErrorCode::EmptyResult, "test split is empty");
  return {ds.slice(0, n_train), ds.slice(n_train, n)};
}

}  // namespace pgam
