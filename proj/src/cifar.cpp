#include <filesystem>
#include <fstream>
#include <iterator>

#include "fedseq/data.hpp"

namespace fedseq {

LabeledDataset load_cifar10_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-10 batch '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IoError("CIFAR-10 batch '" + path + "' is empty");
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
    throw IoError("CIFAR-10 batch '" + path + "' truncated: incomplete record at byte offset " +
                  std::to_string(offset) + " (file size " + std::to_string(bytes.size()) + ", record size " +
                  std::to_string(kCifarRecordBytes) + ")");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  LabeledDataset ds;
  ds.num_classes = 10;
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kCifarPixels));
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw IoError("CIFAR-10 batch '" + path + "': label " + std::to_string(rec[0]) + " at byte offset " +
                    std::to_string(r * kCifarRecordBytes));
    }
    ds.labels[r] = rec[0];
    for (std::size_t p = 0; p < kCifarPixels; ++p)
      ds.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) = rec[1 + p] / 255.0;
  }
  return ds;
}

namespace {

LabeledDataset concat(std::vector<LabeledDataset> parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.inputs.rows();
  LabeledDataset out;
  out.num_classes = 10;
  out.inputs.resize(rows, static_cast<Eigen::Index>(kCifarPixels));
  Eigen::Index r = 0;
  for (auto& p : parts) {
    out.inputs.middleRows(r, p.inputs.rows()) = p.inputs;
    r += p.inputs.rows();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

void normalize(LabeledDataset& ds, const std::array<double, 3>& mean, const std::array<double, 3>& stddev) {
  constexpr Eigen::Index plane = 1024;
  for (Eigen::Index c = 0; c < 3; ++c) {
    auto block = ds.inputs.middleCols(c * plane, plane);
    block.array() = (block.array() - mean[static_cast<std::size_t>(c)]) / stddev[static_cast<std::size_t>(c)];
  }
}

}  // namespace

CifarData load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<LabeledDataset> train_parts;
  for (int i = 1; i <= 5; ++i) {
    const auto path = fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin");
    if (!fs::exists(path)) throw IoError("missing CIFAR-10 file '" + path.string() + "'");
    train_parts.push_back(load_cifar10_batch(path.string()));
  }
  const auto test_path = fs::path(dir) / "test_batch.bin";
  if (!fs::exists(test_path)) throw IoError("missing CIFAR-10 file '" + test_path.string() + "'");

  CifarData data;
  data.train = concat(std::move(train_parts));
  data.test = load_cifar10_batch(test_path.string());
  normalize(data.train, data.mean, data.stddev);
  normalize(data.test, data.mean, data.stddev);
  return data;
}

}  // namespace fedseq
