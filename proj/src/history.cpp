#include "radpipe/history.hpp"

#include <algorithm>
#include <filesystem>
#include <regex>
#include <set>

namespace radpipe {

std::string dataset_stem(std::string_view path) {
  static const std::regex pattern(R"(^(.*?)[-_.]*[0-9]*$)");
  const std::string name = std::filesystem::path(path).stem().string();
  std::smatch m;
  if (std::regex_match(name, m, pattern) && m[1].length() > 0) return m[1].str();
  return name;
}

void HistoryStore::append(ClassifierRecord record) {
  std::lock_guard lock(mutex_);
  records_.push_back(std::move(record));
}

std::vector<ClassifierRecord> HistoryStore::query(const std::optional<std::string>& dataset) const {
  std::vector<ClassifierRecord> out;
  {
    std::lock_guard lock(mutex_);
    if (!dataset) {
      out = records_;
    } else {
      std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
                   [&](const ClassifierRecord& r) { return r.dataset == *dataset; });
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ClassifierRecord& a, const ClassifierRecord& b) {
    if (a.acquired_at != b.acquired_at) return a.acquired_at < b.acquired_at;
    return a.source_path < b.source_path;
  });
  return out;
}

std::vector<std::string> HistoryStore::datasets() const {
  std::set<std::string> names;
  {
    std::lock_guard lock(mutex_);
    for (const auto& r : records_) names.insert(r.dataset);
  }
  return {names.begin(), names.end()};
}

std::size_t HistoryStore::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

void HistoryStore::clear() {
  std::lock_guard lock(mutex_);
  records_.clear();
}

}  // namespace radpipe
