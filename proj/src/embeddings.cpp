#include "promptlearn/embeddings.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "promptlearn/error.hpp"
#include "promptlearn/scoring.hpp"
#include "promptlearn/util.hpp"

namespace pl {

using nlohmann::json;

void EmbeddingMatrix::add(std::string id, std::vector<float> vector) {
  if (id.empty()) fail(ErrorCode::kParse, "embedding row with empty id");
  if (vector.empty()) fail(ErrorCode::kParse, "embedding '" + id + "' is empty");
  if (ids_.empty()) {
    dim_ = vector.size();
  } else if (vector.size() != dim_) {
    fail(ErrorCode::kParse, "embedding '" + id + "' has dimension " + std::to_string(vector.size()) +
                                ", expected " + std::to_string(dim_));
  }
  for (float x : vector) {
    if (!std::isfinite(x)) fail(ErrorCode::kParse, "embedding '" + id + "' has a non-finite value");
  }
  if (index_.count(id)) fail(ErrorCode::kParse, "duplicate embedding id '" + id + "'");
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), vector.begin(), vector.end());
}

bool EmbeddingMatrix::contains(std::string_view id) const { return index_.count(std::string(id)) > 0; }

std::span<const float> EmbeddingMatrix::row(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) fail(ErrorCode::kInvalidArgument, "no embedding for id '" + std::string(id) + "'");
  return std::span<const float>(data_).subspan(it->second * dim_, dim_);
}

namespace {

std::vector<float> to_floats(const json& values, const std::string& id) {
  if (!values.is_array()) fail(ErrorCode::kParse, "embedding '" + id + "': 'vector' must be an array");
  std::vector<float> out;
  out.reserve(values.size());
  for (const auto& v : values) {
    if (!v.is_number()) fail(ErrorCode::kParse, "embedding '" + id + "' has a non-numeric or non-finite value");
    const double d = v.get<double>();
    const auto f = static_cast<float>(d);
    if (!std::isfinite(d) || !std::isfinite(f)) fail(ErrorCode::kParse, "embedding '" + id + "' has a non-finite value");
    out.push_back(f);
  }
  return out;
}

}  // namespace

EmbeddingMatrix parse_embeddings(std::string_view jsonl) {
  EmbeddingMatrix m;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, "embeddings line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("vector")) {
      fail(ErrorCode::kParse, "embeddings line " + std::to_string(line_no) + ": need string 'id' and 'vector'");
    }
    auto id = obj["id"].get<std::string>();
    auto vec = to_floats(obj["vector"], id);
    m.add(std::move(id), std::move(vec));
  }
  if (m.rows() == 0) fail(ErrorCode::kParse, "embeddings file has no rows");
  return m;
}

EmbeddingMatrix load_embeddings(const std::string& path) { return parse_embeddings(read_file(path)); }

std::string serialize_embeddings(const EmbeddingMatrix& matrix) {
  std::string out;
  char buf[32];
  for (const auto& id : matrix.ids()) {
    out += "{\"id\":";
    out += json(id).dump();
    out += ",\"vector\":[";
    const auto row = matrix.row(id);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(row[i]));
      out += buf;
    }
    out += "]}\n";
  }
  return out;
}

void save_embeddings(const EmbeddingMatrix& matrix, const std::string& path) {
  write_file(path, serialize_embeddings(matrix));
}

EmbeddingMatrix fetch_embeddings(const LogitServerBackend& server, std::span<const ConversationRecord> records,
                                 const FetchOptions& options) {
  if (records.empty()) fail(ErrorCode::kInvalidArgument, "no records to embed");
  if (options.batch_size == 0) fail(ErrorCode::kInvalidArgument, "batch size must be positive");
  const std::size_t batches = (records.size() + options.batch_size - 1) / options.batch_size;
  std::vector<std::vector<std::vector<double>>> results(batches);

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t b = next++; b < batches; b = next++) {
      try {
        const std::size_t begin = b * options.batch_size;
        const std::size_t end = std::min(records.size(), begin + options.batch_size);
        std::vector<std::string> texts;
        for (std::size_t i = begin; i < end; ++i) texts.push_back(records[i].text);
        results[b] = server.embed(texts);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = batches;
      }
    }
  };
  {
    const std::size_t workers = std::max<std::size_t>(1, std::min(options.concurrency, batches));
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  EmbeddingMatrix m;
  std::size_t i = 0;
  for (const auto& batch : results) {
    for (const auto& vec : batch) {
      const auto& id = records[i++].id;
      std::vector<float> row;
      row.reserve(vec.size());
      for (double x : vec) {
        const auto f = static_cast<float>(x);
        if (!std::isfinite(f)) fail(ErrorCode::kProtocol, "embedding for '" + id + "' is not finite in float range");
        row.push_back(f);
      }
      m.add(id, std::move(row));
    }
  }
  return m;
}

}  // namespace pl
