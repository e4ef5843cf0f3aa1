#include <fstream>
#include <sstream>

#include "findml/data.hpp"
#include "findml/format.hpp"

namespace findml {

namespace {

[[noreturn]] void parse_error(const std::filesystem::path& path, std::size_t line, const std::string& why) {
  throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line) + ": " + why);
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

// Checks `fields` against the fixed prefix plus `<prefix>0..<prefix>{D-1}`; returns D.
Index check_header(const std::filesystem::path& path, const std::vector<std::string_view>& fields,
                   const std::vector<std::string_view>& fixed, char value_prefix) {
  require(fields.size() > fixed.size(), ErrorCode::SchemaMismatch, path.string() + ": header has no value columns");
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    require(fields[i] == fixed[i], ErrorCode::SchemaMismatch,
            path.string() + ": expected column '" + std::string(fixed[i]) + "'");
  }
  for (std::size_t i = fixed.size(); i < fields.size(); ++i) {
    const std::string want = value_prefix + std::to_string(i - fixed.size());
    require(fields[i] == want, ErrorCode::SchemaMismatch, path.string() + ": expected column '" + want + "'");
  }
  return static_cast<Index>(fields.size() - fixed.size());
}

long long field_int(const std::filesystem::path& path, std::size_t line, std::string_view s, const char* what) {
  long long v = 0;
  if (!parse_int(s, v)) parse_error(path, line, std::string("bad ") + what + " '" + std::string(s) + "'");
  return v;
}

double field_double(const std::filesystem::path& path, std::size_t line, std::string_view s) {
  double v = 0.0;
  if (!parse_double(s, v)) parse_error(path, line, "bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  std::ofstream out = open_out(path);
  out << "id,split,class,attribute";
  for (Index f = 0; f < ds.feature_dim(); ++f) out << ",f" << f;
  out << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    out << ds.ids[u] << ',' << to_string(ds.split[u]) << ',' << ds.classes[u] << ',' << ds.attributes[u];
    for (Index f = 0; f < ds.feature_dim(); ++f) out << ',' << format_double(ds.features(i, f));
    out << '\n';
  }
  require(out.good(), ErrorCode::IoError, "write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  require(!lines.empty(), ErrorCode::ParseError, path.string() + ": empty file");
  const Index dim = check_header(path, split_view(lines[0], ','), {"id", "split", "class", "attribute"}, 'f');

  Dataset ds;
  ds.features.resize(static_cast<Index>(lines.size() - 1), dim);
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split_view(lines[l], ',');
    if (fields.size() != static_cast<std::size_t>(dim) + 4) {
      parse_error(path, l + 1, "expected " + std::to_string(dim + 4) + " fields, got " + std::to_string(fields.size()));
    }
    ds.ids.push_back(field_int(path, l + 1, fields[0], "id"));
    const auto tag = trim(fields[1]);
    if (tag == "train") {
      ds.split.push_back(Split::Train);
    } else if (tag == "test") {
      ds.split.push_back(Split::Test);
    } else {
      parse_error(path, l + 1, "bad split '" + std::string(tag) + "'");
    }
    ds.classes.push_back(static_cast<int>(field_int(path, l + 1, fields[2], "class")));
    ds.attributes.push_back(static_cast<int>(field_int(path, l + 1, fields[3], "attribute")));
    for (Index f = 0; f < dim; ++f) {
      ds.features(static_cast<Index>(l - 1), f) = field_double(path, l + 1, fields[static_cast<std::size_t>(f) + 4]);
    }
  }
  try {
    ds.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
  return ds;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingDump& dump) {
  const Matrix& e = dump.embeddings.values();
  require(dump.ids.size() == static_cast<std::size_t>(e.rows()) && dump.classes.size() == dump.ids.size() &&
              dump.attributes.size() == dump.ids.size(),
          ErrorCode::InvalidArgument, "embedding dump arrays differ in length");
  std::ofstream out = open_out(path);
  out << "id,class,attribute";
  for (Index d = 0; d < e.cols(); ++d) out << ",e" << d;
  out << '\n';
  for (Index i = 0; i < e.rows(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    out << dump.ids[u] << ',' << dump.classes[u] << ',' << dump.attributes[u];
    for (Index d = 0; d < e.cols(); ++d) out << ',' << format_double(e(i, d));
    out << '\n';
  }
  require(out.good(), ErrorCode::IoError, "write failed: " + path.string());
}

EmbeddingDump read_embeddings(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  require(!lines.empty(), ErrorCode::ParseError, path.string() + ": empty file");
  const Index dim = check_header(path, split_view(lines[0], ','), {"id", "class", "attribute"}, 'e');

  EmbeddingDump dump;
  Matrix e(static_cast<Index>(lines.size() - 1), dim);
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split_view(lines[l], ',');
    if (fields.size() != static_cast<std::size_t>(dim) + 3) {
      parse_error(path, l + 1, "expected " + std::to_string(dim + 3) + " fields, got " + std::to_string(fields.size()));
    }
    dump.ids.push_back(field_int(path, l + 1, fields[0], "id"));
    dump.classes.push_back(static_cast<int>(field_int(path, l + 1, fields[1], "class")));
    dump.attributes.push_back(static_cast<int>(field_int(path, l + 1, fields[2], "attribute")));
    for (Index d = 0; d < dim; ++d) {
      e(static_cast<Index>(l - 1), d) = field_double(path, l + 1, fields[static_cast<std::size_t>(d) + 3]);
    }
    const double norm = e.row(static_cast<Index>(l - 1)).norm();
    if (std::abs(norm - 1.0) > 1e-6) parse_error(path, l + 1, "row is not unit norm (" + format_double(norm) + ")");
  }
  require(e.rows() >= 1, ErrorCode::ParseError, path.string() + ": no rows");
  // Rows within 1e-9 of the sphere are kept bit-for-bit; looser rows are projected.
  const bool exact = ((e.rowwise().norm().array() - 1.0).abs() <= 1e-9).all();
  dump.embeddings = exact ? EmbeddingMatrix(std::move(e), true) : normalize_to_hypersphere(e);
  return dump;
}

}  // namespace findml
