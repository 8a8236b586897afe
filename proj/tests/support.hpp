#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "oracles.hpp"
#include "snf/tensor.hpp"

namespace testing_support {

inline snf::Tensor to_tensor(const oracle::Mat& m) {
  snf::Tensor t({m.size(), m[0].size()});
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) t(i, j) = m[i][j];
  return t;
}

inline snf::Tensor to_row(const oracle::Vec& v) { return snf::Tensor::row(v); }

inline oracle::Vec to_vec(const snf::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline oracle::Mat to_mat(const snf::Tensor& t) {
  oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("snf_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing_support
