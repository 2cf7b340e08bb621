#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "radpipe/reduce.hpp"

namespace radpipe {

/// Dataset name of an image file: the file name without its extension, a
/// trailing run of digits, and any separators ('_', '-', '.') before it.
/// Implemented as the regex  ^(.*?)[-_.]*[0-9]*$  on the extension-less name;
/// a name that is all digits is its own dataset.
std::string dataset_stem(std::string_view path);

/// Append-only classifier history shared by the workers and the control side.
class HistoryStore {
 public:
  void append(ClassifierRecord record);

  /// Snapshot ordered by (acquired_at, source_path); optionally only one dataset.
  std::vector<ClassifierRecord> query(const std::optional<std::string>& dataset = std::nullopt) const;

  std::vector<std::string> datasets() const;
  std::size_t size() const;
  void clear();

 private:
  mutable std::mutex mutex_;
  std::vector<ClassifierRecord> records_;
};

}  // namespace radpipe
