#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ictxot/nonparametric.hpp"
#include "ictxot/parametric.hpp"
#include "ictxot/tasks.hpp"
#include "ictxot/trainer.hpp"

namespace ictxot {

using Json = nlohmann::json;  // std::map-backed, so keys are emitted sorted

/// Shape-annotated {"rows", "cols", "data"} with row-major data.
Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const GaussianTask& task);
GaussianTask task_from_json(const Json& j);

/// {dim, C_theta, M, lambda, Q, W, units: [[c, w, b], ...]}
Json to_json(const ParametricParams& params);
ParametricParams parametric_from_json(const Json& j);

Json to_json(const NonparametricWeights& w);
NonparametricWeights nonparametric_from_json(const Json& j);

Json to_json(const TrainConfig& config);

/// %.17g: round-trips every double.
std::string format_number(double v);

/// RFC-4180 CSV: comma separated, CRLF line ends, fields quoted when they
/// contain a comma, quote or line break.
class CsvWriter {
 public:
  using Cell = std::variant<std::string, double, std::int64_t>;

  explicit CsvWriter(std::ostream& out) : out_(&out) {}
  void row(const std::vector<Cell>& cells);

 private:
  std::ostream* out_;
};

std::string csv_escape(const std::string& field);

/// Writes history as epoch,lr,risk,transport,penalty.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

/// Two-space indented JSON plus a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Hex SHA-1 of "blob <size>\0" + content, the id git gives the same bytes.
std::string git_blob_sha1(const std::string& content);

}  // namespace ictxot
