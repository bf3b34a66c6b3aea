#pragma once

#include "webnn/random.hpp"
#include "webnn/tensor.hpp"

#include "json.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace webnn {

/// Samples along axis 0 of `inputs` with one integer label each.
template <typename T>
struct Dataset {
    Tensor<T> inputs;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

/// Rows of `data` picked by `indices`, in that order.
template <typename T>
Dataset<T> gather(const Dataset<T>& data, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Titanic

struct TitanicRecord {
    long passenger_id = 0;
    std::optional<int> survived;
    int pclass = 0;
    std::string name;
    std::string sex;
    std::optional<double> age;
    int sibsp = 0;
    int parch = 0;
    std::string ticket;
    std::optional<double> fare;
    std::optional<std::string> cabin;
    std::optional<std::string> embarked;
};

/// Kaggle layout, header required. Survived may be absent (test file).
std::vector<TitanicRecord> parse_titanic_csv(std::istream& in);
std::vector<TitanicRecord> load_titanic_csv(const std::filesystem::path& path);

inline constexpr std::array<const char*, 8> kTitanicFeatureNames = {
    "Pclass", "Sex", "Age", "SibSp", "Parch", "Fare", "Embarked", "CabinKnown"};

/// Imputation and standardisation statistics, fitted on training rows only.
struct FeatureStats {
    double age_median = 0.0;
    double fare_median = 0.0;
    std::array<double, 8> mean{};
    std::array<double, 8> stddev{};

    nlohmann::json to_json() const;
    static FeatureStats from_json(const nlohmann::json& j);
};

struct TitanicFeatures {
    std::size_t rows = 0;
    std::vector<double> values; // row-major (rows, 8), standardised
    std::vector<int> labels;    // empty when the records carry no Survived column
    FeatureStats stats;
};

/// Unstandardised 8-feature encoding of one record with the given medians:
/// [Pclass, Sex (male 0, female 1), Age, SibSp, Parch, Fare,
///  Embarked (S 0, C 1, Q 2, missing 0), CabinKnown].
std::array<double, 8> encode_titanic(const TitanicRecord& record, double age_median,
                                     double fare_median);

/// Fits FeatureStats on `records` when `stats` is empty, otherwise applies
/// the given stats unchanged.
TitanicFeatures preprocess_titanic(std::span<const TitanicRecord> records,
                                   const std::optional<FeatureStats>& stats = std::nullopt);

template <typename T>
Dataset<T> titanic_dataset(const TitanicFeatures& features);

// ---------------------------------------------------------------------------
// MNIST

inline constexpr std::uint32_t kIdxImagesMagic = 2051; // 0x00000803
inline constexpr std::uint32_t kIdxLabelsMagic = 2049; // 0x00000801

struct MnistSet {
    std::size_t count = 0;
    std::size_t rows = 28;
    std::size_t cols = 28;
    std::vector<std::uint8_t> pixels; // count * rows * cols
    std::vector<int> labels;

    /// (count,1,rows,cols) with pixels divided by 255.
    template <typename T>
    Tensor<T> images() const;
    /// The first `n` samples (all if n >= count).
    MnistSet head(std::size_t n) const;
};

MnistSet load_mnist_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);
void save_mnist_idx(const MnistSet& set, const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path);

template <typename T>
Dataset<T> mnist_dataset(const MnistSet& set);

// ---------------------------------------------------------------------------
// Splits and batching

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

/// Seeded permutation; the last floor(count * val_fraction) entries form
/// the validation split.
SplitIndices split_train_val(std::size_t count, double val_fraction, std::uint64_t seed);

using Batch = std::vector<std::size_t>;

/// Consecutive batches in original order; the last one may be short.
std::vector<Batch> batches(std::size_t count, std::size_t batch_size);
/// Batches over a permutation drawn from `rng`.
std::vector<Batch> batches(std::size_t count, std::size_t batch_size, Rng& rng);
std::vector<Batch> batches(std::size_t count, std::size_t batch_size, std::uint64_t shuffle_seed);

} // namespace webnn
