#include "ictxot/io.hpp"

#include <openssl/sha.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ictxot {

namespace {

std::vector<double> vector_of(const Json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array");
  return j.get<std::vector<double>>();
}

}  // namespace

Json to_json(const Matrix& m) { return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}}; }

Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  std::vector<double> data = vector_of(j.at("data"), "matrix data");
  if (data.size() != rows * cols) {
    throw DimensionError("matrix json: " + std::to_string(rows) + "x" + std::to_string(cols) + " with " +
                         std::to_string(data.size()) + " values");
  }
  return Matrix(rows, cols, std::move(data));
}

Json to_json(const GaussianTask& task) {
  return Json{{"mean", task.mean},
              {"frame", to_json(task.frame)},
              {"eigenvalues", task.eigenvalues},
              {"seed_id", task.seed_id}};
}

GaussianTask task_from_json(const Json& j) {
  return GaussianTask::from_frame(vector_of(j.at("mean"), "mean"), matrix_from_json(j.at("frame")),
                                  vector_of(j.at("eigenvalues"), "eigenvalues"), j.at("seed_id").get<std::uint64_t>());
}

Json to_json(const ParametricParams& params) {
  Json units = Json::array();
  for (const ReluUnit& u : params.feature.units()) units.push_back({u.c, u.w, u.b});
  return Json{{"dim", params.dim()},
              {"C_theta", params.c_theta},
              {"M", params.capacity},
              {"lambda", params.lambda},
              {"Q", to_json(params.q)},
              {"W", to_json(params.feature.inner())},
              {"units", units}};
}

ParametricParams parametric_from_json(const Json& j) {
  ParametricParams p;
  p.q = matrix_from_json(j.at("Q"));
  std::vector<ReluUnit> units;
  for (const Json& u : j.at("units")) {
    if (!u.is_array() || u.size() != 3) throw std::invalid_argument("checkpoint: each unit is [c, w, b]");
    units.push_back({u[0].get<double>(), u[1].get<double>(), u[2].get<double>()});
  }
  p.feature = FeatureNet(matrix_from_json(j.at("W")), std::move(units));
  p.c_theta = j.at("C_theta").get<double>();
  p.capacity = j.at("M").get<double>();
  p.lambda = j.at("lambda").get<double>();
  if (j.at("dim").get<std::size_t>() != p.dim()) throw DimensionError("checkpoint: dim does not match Q");
  p.validate();
  return p;
}

namespace {

Json dense_json(const Dense& d) { return Json{{"weight", to_json(d.weight)}, {"bias", to_json(d.bias)}}; }

Dense dense_from(const Json& j) { return Dense{matrix_from_json(j.at("weight")), matrix_from_json(j.at("bias"))}; }

Json attention_json(const Attention& a) {
  auto list = [](const std::vector<Matrix>& ms) {
    Json out = Json::array();
    for (const Matrix& m : ms) out.push_back(to_json(m));
    return out;
  };
  return Json{{"query", list(a.query)}, {"key", list(a.key)}, {"value", list(a.value)}, {"output", list(a.output)}};
}

Attention attention_from(const Json& j) {
  auto list = [](const Json& arr) {
    std::vector<Matrix> out;
    for (const Json& m : arr) out.push_back(matrix_from_json(m));
    return out;
  };
  return Attention{list(j.at("query")), list(j.at("key")), list(j.at("value")), list(j.at("output"))};
}

}  // namespace

Json to_json(const NonparametricWeights& w) {
  return Json{{"config",
               {{"dim", w.config.dim},
                {"hidden", w.config.hidden},
                {"heads", w.config.heads},
                {"prompt_length", w.config.prompt_length}}},
              {"source_in", dense_json(w.source_in)},
              {"source_hidden", dense_json(w.source_hidden)},
              {"target_in", dense_json(w.target_in)},
              {"target_hidden", dense_json(w.target_hidden)},
              {"self_attention", attention_json(w.self_attention)},
              {"cross_attention", attention_json(w.cross_attention)},
              {"head_in", dense_json(w.head_in)},
              {"head_out", dense_json(w.head_out)}};
}

NonparametricWeights nonparametric_from_json(const Json& j) {
  NonparametricWeights w;
  const Json& c = j.at("config");
  w.config.dim = c.at("dim").get<std::size_t>();
  w.config.hidden = c.at("hidden").get<std::size_t>();
  w.config.heads = c.at("heads").get<std::size_t>();
  w.config.prompt_length = c.at("prompt_length").get<std::size_t>();
  w.config.validate();
  w.source_in = dense_from(j.at("source_in"));
  w.source_hidden = dense_from(j.at("source_hidden"));
  w.target_in = dense_from(j.at("target_in"));
  w.target_hidden = dense_from(j.at("target_hidden"));
  w.self_attention = attention_from(j.at("self_attention"));
  w.cross_attention = attention_from(j.at("cross_attention"));
  w.head_in = dense_from(j.at("head_in"));
  w.head_out = dense_from(j.at("head_out"));
  // Shapes must match a freshly initialized model of the same config.
  Stream probe;
  std::vector<std::pair<std::size_t, std::size_t>> expected;
  NonparametricWeights::init(w.config, probe).for_each([&](const Matrix& m) { expected.emplace_back(m.rows(), m.cols()); });
  std::size_t i = 0;
  bool ok = true;
  w.for_each([&](const Matrix& m) {
    ok = ok && i < expected.size() && expected[i] == std::pair(m.rows(), m.cols());
    ++i;
  });
  if (!ok || i != expected.size()) throw DimensionError("checkpoint: weight shapes do not match config");
  return w;
}

Json to_json(const TrainConfig& c) {
  return Json{{"base_lr", c.base_lr}, {"epochs", c.epochs},   {"beta1", c.beta1},     {"beta2", c.beta2},
              {"adam_eps", c.adam_eps}, {"seed", c.seed},     {"projection", c.projection},
              {"shuffle", c.shuffle},  {"lambda", c.lambda}};
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void CsvWriter::row(const std::vector<Cell>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) *out_ << ',';
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::string>) *out_ << csv_escape(v);
          else if constexpr (std::is_same_v<T, double>) *out_ << format_number(v);
          else *out_ << v;
        },
        cells[i]);
  }
  *out_ << "\r\n";
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  CsvWriter csv(out);
  csv.row({std::string("epoch"), std::string("lr"), std::string("risk"), std::string("transport"),
           std::string("penalty")});
  for (const EpochRecord& e : history) {
    csv.row({static_cast<std::int64_t>(e.epoch), e.lr, e.risk, e.transport, e.penalty});
  }
  write_text(path, out.str());
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const std::filesystem::path& path) { return Json::parse(read_text(path)); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out += hex[b >> 4];
    out += hex[b & 0xF];
  }
  return out;
}

}  // namespace ictxot
