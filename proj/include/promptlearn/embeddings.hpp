#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptlearn/corpus.hpp"

namespace pl {

class LogitServerBackend;

// Id-keyed dense vectors in single precision; the text format writes 9
// significant digits, which round-trips every float exactly.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  // Appends a row; the first row fixes the dimension.
  void add(std::string id, std::vector<float> vector);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return ids_.size(); }
  bool contains(std::string_view id) const;
  std::span<const float> row(std::string_view id) const;
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  bool operator==(const EmbeddingMatrix& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Line-delimited {"id": string, "vector": [numbers]}.
EmbeddingMatrix parse_embeddings(std::string_view jsonl);
EmbeddingMatrix load_embeddings(const std::string& path);
std::string serialize_embeddings(const EmbeddingMatrix& matrix);
void save_embeddings(const EmbeddingMatrix& matrix, const std::string& path);

struct FetchOptions {
  std::size_t batch_size = 32;
  std::size_t concurrency = 2;
};

// Embeds record texts via the server's /embed endpoint. Row i is record i.
EmbeddingMatrix fetch_embeddings(const LogitServerBackend& server, std::span<const ConversationRecord> records,
                                 const FetchOptions& options = {});

}  // namespace pl
