#include "webnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace webnn {

using nlohmann::json;

template <typename T>
Dataset<T> gather(const Dataset<T>& data, std::span<const std::size_t> indices) {
    if (indices.empty()) {
        throw ValidationError("cannot gather an empty selection");
    }
    const std::size_t n = data.size();
    const std::size_t row = data.inputs.numel() / n;
    Shape shape = data.inputs.shape();
    shape[0] = indices.size();
    std::vector<T> values(indices.size() * row);
    std::vector<int> labels(indices.size());
    auto src = data.inputs.data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= n) {
            throw DimensionError("sample index " + std::to_string(indices[i]) +
                                 " out of range for " + std::to_string(n) + " samples");
        }
        std::copy_n(src.data() + indices[i] * row, row, values.data() + i * row);
        labels[i] = data.labels[indices[i]];
    }
    return Dataset<T>{Tensor<T>(std::move(shape), std::move(values)), std::move(labels)};
}

namespace {

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

// RFC 4180: quoted fields may hold commas, newlines and doubled quotes.
std::vector<CsvRow> parse_csv(const std::string& text) {
    std::vector<CsvRow> rows;
    CsvRow current;
    std::string field;
    std::size_t line = 1;
    current.line = line;
    bool in_quotes = false;
    bool field_started = false;
    bool after_quote = false;
    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
        after_quote = false;
    };
    auto end_row = [&] {
        end_field();
        bool blank = current.fields.size() == 1 && current.fields[0].empty();
        if (!blank) {
            rows.push_back(std::move(current));
        }
        current = CsvRow{};
        current.line = line;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                    after_quote = true;
                }
            } else {
                if (c == '\n') {
                    ++line;
                }
                field.push_back(c);
            }
            continue;
        }
        if (c == ',') {
            end_field();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            ++line;
            end_row();
        } else if (c == '"') {
            if (field_started) {
                throw FormatError("line " + std::to_string(current.line) +
                                  ": quote inside an unquoted field");
            }
            in_quotes = true;
            field_started = true;
        } else {
            if (after_quote) {
                throw FormatError("line " + std::to_string(current.line) +
                                  ": text after a closing quote");
            }
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) {
        throw FormatError("line " + std::to_string(current.line) + ": unterminated quoted field");
    }
    if (field_started || !current.fields.empty()) {
        end_row();
    }
    return rows;
}

template <typename N>
N parse_number(const std::string& text, std::size_t line, const char* column) {
    N value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    std::from_chars_result result{};
    if constexpr (std::is_floating_point_v<N>) {
        // libstdc++ 11 lacks floating from_chars on some targets; strtod is enough here.
        char* end = nullptr;
        std::string copy(text);
        value = static_cast<N>(std::strtod(copy.c_str(), &end));
        if (copy.empty() || end != copy.c_str() + copy.size() || !std::isfinite(value)) {
            throw FormatError("line " + std::to_string(line) + ": column " + column +
                              " is not a number: '" + text + "'");
        }
        return value;
    } else {
        result = std::from_chars(first, last, value);
        if (result.ec != std::errc() || result.ptr != last) {
            throw FormatError("line " + std::to_string(line) + ": column " + column +
                              " is not an integer: '" + text + "'");
        }
        return value;
    }
}

const std::vector<std::string>& titanic_columns() {
    static const std::vector<std::string> columns = {"PassengerId", "Pclass", "Name",  "Sex",
                                                     "Age",         "SibSp",  "Parch", "Ticket",
                                                     "Fare",        "Cabin",  "Embarked"};
    return columns;
}

} // namespace

std::vector<TitanicRecord> parse_titanic_csv(std::istream& in) {
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        text.erase(0, 3);
    }
    std::vector<CsvRow> rows = parse_csv(text);
    if (rows.empty()) {
        throw FormatError("Titanic CSV is empty; expected a header row");
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < rows[0].fields.size(); ++i) {
        index[rows[0].fields[i]] = i;
    }
    std::string missing;
    for (const auto& column : titanic_columns()) {
        if (!index.contains(column)) {
            missing += (missing.empty() ? "" : ", ") + column;
        }
    }
    if (!missing.empty()) {
        std::string expected;
        for (const auto& column : titanic_columns()) {
            expected += (expected.empty() ? "" : ",") + column;
        }
        throw FormatError("unknown Titanic header layout: missing " + missing +
                          "; expected columns " + expected + " (Survived optional)");
    }
    const bool labelled = index.contains("Survived");
    const std::size_t width = rows[0].fields.size();

    std::vector<TitanicRecord> records;
    std::set<long> seen_ids;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const CsvRow& row = rows[r];
        if (row.fields.size() != width) {
            throw FormatError("line " + std::to_string(row.line) + ": expected " +
                              std::to_string(width) + " fields, found " +
                              std::to_string(row.fields.size()));
        }
        auto field = [&](const char* column) -> const std::string& {
            return row.fields[index.at(column)];
        };
        TitanicRecord rec;
        rec.passenger_id = parse_number<long>(field("PassengerId"), row.line, "PassengerId");
        if (!seen_ids.insert(rec.passenger_id).second) {
            throw FormatError("line " + std::to_string(row.line) + ": duplicate PassengerId " +
                              std::to_string(rec.passenger_id));
        }
        if (labelled && !field("Survived").empty()) {
            int survived = parse_number<int>(field("Survived"), row.line, "Survived");
            if (survived != 0 && survived != 1) {
                throw FormatError("line " + std::to_string(row.line) + ": Survived must be 0 or 1");
            }
            rec.survived = survived;
        }
        rec.pclass = parse_number<int>(field("Pclass"), row.line, "Pclass");
        rec.name = field("Name");
        rec.sex = field("Sex");
        if (!field("Age").empty()) {
            rec.age = parse_number<double>(field("Age"), row.line, "Age");
        }
        rec.sibsp = parse_number<int>(field("SibSp"), row.line, "SibSp");
        rec.parch = parse_number<int>(field("Parch"), row.line, "Parch");
        rec.ticket = field("Ticket");
        if (!field("Fare").empty()) {
            rec.fare = parse_number<double>(field("Fare"), row.line, "Fare");
        }
        if (!field("Cabin").empty()) {
            rec.cabin = field("Cabin");
        }
        if (!field("Embarked").empty()) {
            rec.embarked = field("Embarked");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<TitanicRecord> load_titanic_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return parse_titanic_csv(in);
}

json FeatureStats::to_json() const {
    return json{{"age_median", age_median},
                {"fare_median", fare_median},
                {"mean", mean},
                {"stddev", stddev}};
}

FeatureStats FeatureStats::from_json(const json& j) {
    FeatureStats s;
    s.age_median = j.at("age_median").get<double>();
    s.fare_median = j.at("fare_median").get<double>();
    s.mean = j.at("mean").get<std::array<double, 8>>();
    s.stddev = j.at("stddev").get<std::array<double, 8>>();
    return s;
}

std::array<double, 8> encode_titanic(const TitanicRecord& record, double age_median,
                                     double fare_median) {
    double sex = 0.0;
    if (record.sex == "female") {
        sex = 1.0;
    } else if (record.sex != "male") {
        throw ValidationError("passenger " + std::to_string(record.passenger_id) +
                              " has unknown sex '" + record.sex + "'");
    }
    double embarked = 0.0; // S and missing
    if (record.embarked == "C") {
        embarked = 1.0;
    } else if (record.embarked == "Q") {
        embarked = 2.0;
    }
    return {static_cast<double>(record.pclass),
            sex,
            record.age.value_or(age_median),
            static_cast<double>(record.sibsp),
            static_cast<double>(record.parch),
            record.fare.value_or(fare_median),
            embarked,
            record.cabin.has_value() ? 1.0 : 0.0};
}

namespace {

double median(std::vector<double> values) {
    if (values.empty()) {
        return 0.0;
    }
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

} // namespace

TitanicFeatures preprocess_titanic(std::span<const TitanicRecord> records,
                                   const std::optional<FeatureStats>& stats) {
    if (records.empty()) {
        throw ValidationError("cannot preprocess zero Titanic records");
    }
    TitanicFeatures out;
    out.rows = records.size();
    if (stats) {
        out.stats = *stats;
    } else {
        std::vector<double> ages;
        std::vector<double> fares;
        for (const auto& r : records) {
            if (r.age) {
                ages.push_back(*r.age);
            }
            if (r.fare) {
                fares.push_back(*r.fare);
            }
        }
        out.stats.age_median = median(ages);
        out.stats.fare_median = median(fares);
    }

    std::vector<std::array<double, 8>> raw;
    raw.reserve(records.size());
    for (const auto& r : records) {
        raw.push_back(encode_titanic(r, out.stats.age_median, out.stats.fare_median));
    }
    if (!stats) {
        const double n = static_cast<double>(raw.size());
        for (std::size_t c = 0; c < 8; ++c) {
            double total = 0.0;
            for (const auto& row : raw) {
                total += row[c];
            }
            const double mean = total / n;
            double sq = 0.0;
            for (const auto& row : raw) {
                sq += (row[c] - mean) * (row[c] - mean);
            }
            const double sd = std::sqrt(sq / n);
            out.stats.mean[c] = mean;
            out.stats.stddev[c] = sd > 0.0 ? sd : 1.0;
        }
    }
    out.values.reserve(raw.size() * 8);
    for (const auto& row : raw) {
        for (std::size_t c = 0; c < 8; ++c) {
            out.values.push_back((row[c] - out.stats.mean[c]) / out.stats.stddev[c]);
        }
    }
    const bool labelled = std::all_of(records.begin(), records.end(),
                                      [](const TitanicRecord& r) { return r.survived.has_value(); });
    if (labelled) {
        for (const auto& r : records) {
            out.labels.push_back(*r.survived);
        }
    }
    return out;
}

template <typename T>
Dataset<T> titanic_dataset(const TitanicFeatures& features) {
    if (features.labels.size() != features.rows) {
        throw ValidationError("Titanic records carry no Survived labels");
    }
    std::vector<T> values(features.values.begin(), features.values.end());
    return Dataset<T>{Tensor<T>(Shape{features.rows, 8}, std::move(values)), features.labels};
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> MnistSet::images() const {
    std::vector<T> values(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        values[i] = static_cast<T>(pixels[i]) / T(255);
    }
    return Tensor<T>(Shape{count, 1, rows, cols}, std::move(values));
}

MnistSet MnistSet::head(std::size_t n) const {
    MnistSet out = *this;
    if (n < count) {
        out.count = n;
        out.pixels.resize(n * rows * cols);
        out.labels.resize(n);
    }
    return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::string& bytes, std::size_t pos, const std::string& what) {
    if (pos + 4 > bytes.size()) {
        throw FormatError(what + ": truncated IDX header");
    }
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        v = (v << 8) | static_cast<unsigned char>(bytes[pos + i]);
    }
    return v;
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

} // namespace

MnistSet load_mnist_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
    const std::string images = read_file(images_path);
    const std::string labels = read_file(labels_path);
    const std::string image_name = images_path.filename().string();
    const std::string label_name = labels_path.filename().string();

    const std::uint32_t image_magic = read_be32(images, 0, image_name);
    if (image_magic != kIdxImagesMagic) {
        throw FormatError(image_name + ": expected IDX image magic 2051, found " +
                          std::to_string(image_magic));
    }
    const std::uint32_t label_magic = read_be32(labels, 0, label_name);
    if (label_magic != kIdxLabelsMagic) {
        throw FormatError(label_name + ": expected IDX label magic 2049, found " +
                          std::to_string(label_magic));
    }
    MnistSet set;
    set.count = read_be32(images, 4, image_name);
    set.rows = read_be32(images, 8, image_name);
    set.cols = read_be32(images, 12, image_name);
    const std::size_t label_count = read_be32(labels, 4, label_name);
    if (label_count != set.count) {
        throw FormatError("image file holds " + std::to_string(set.count) +
                          " samples but label file holds " + std::to_string(label_count));
    }
    if (set.count == 0 || set.rows == 0 || set.cols == 0) {
        throw FormatError(image_name + ": empty image set");
    }
    const std::size_t pixel_count = set.count * set.rows * set.cols;
    if (images.size() != 16 + pixel_count) {
        throw FormatError(image_name + ": expected " + std::to_string(16 + pixel_count) +
                          " bytes, found " + std::to_string(images.size()));
    }
    if (labels.size() != 8 + set.count) {
        throw FormatError(label_name + ": expected " + std::to_string(8 + set.count) +
                          " bytes, found " + std::to_string(labels.size()));
    }
    set.pixels.assign(images.begin() + 16, images.end());
    set.labels.resize(set.count);
    for (std::size_t i = 0; i < set.count; ++i) {
        const int label = static_cast<unsigned char>(labels[8 + i]);
        if (label > 9) {
            throw FormatError(label_name + ": label " + std::to_string(label) + " at index " +
                              std::to_string(i) + " is outside [0,9]");
        }
        set.labels[i] = label;
    }
    return set;
}

void save_mnist_idx(const MnistSet& set, const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path) {
    if (set.pixels.size() != set.count * set.rows * set.cols || set.labels.size() != set.count) {
        throw DimensionError("MNIST set sizes are inconsistent");
    }
    std::ofstream images(images_path, std::ios::binary | std::ios::trunc);
    std::ofstream labels(labels_path, std::ios::binary | std::ios::trunc);
    if (!images || !labels) {
        throw std::runtime_error("cannot open IDX output files");
    }
    write_be32(images, kIdxImagesMagic);
    write_be32(images, static_cast<std::uint32_t>(set.count));
    write_be32(images, static_cast<std::uint32_t>(set.rows));
    write_be32(images, static_cast<std::uint32_t>(set.cols));
    images.write(reinterpret_cast<const char*>(set.pixels.data()),
                 static_cast<std::streamsize>(set.pixels.size()));
    write_be32(labels, kIdxLabelsMagic);
    write_be32(labels, static_cast<std::uint32_t>(set.count));
    for (int label : set.labels) {
        labels.put(static_cast<char>(label));
    }
}

template <typename T>
Dataset<T> mnist_dataset(const MnistSet& set) {
    return Dataset<T>{set.images<T>(), set.labels};
}

// ---------------------------------------------------------------------------

SplitIndices split_train_val(std::size_t count, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ValidationError("validation fraction must lie in (0,1), got " +
                              std::to_string(val_fraction));
    }
    const auto val_count =
        static_cast<std::size_t>(std::floor(static_cast<double>(count) * val_fraction));
    if (val_count == 0 || val_count >= count) {
        throw ValidationError("splitting " + std::to_string(count) + " samples at fraction " +
                              std::to_string(val_fraction) + " leaves an empty split");
    }
    Rng rng(seed);
    std::vector<std::size_t> order = rng.permutation(count);
    SplitIndices split;
    split.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(val_count));
    split.val.assign(order.end() - static_cast<std::ptrdiff_t>(val_count), order.end());
    return split;
}

namespace {

std::vector<Batch> chunk(const std::vector<std::size_t>& order, std::size_t batch_size) {
    if (batch_size == 0) {
        throw ValidationError("batch size must be >= 1");
    }
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

} // namespace

std::vector<Batch> batches(std::size_t count, std::size_t batch_size) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) {
        order[i] = i;
    }
    return chunk(order, batch_size);
}

std::vector<Batch> batches(std::size_t count, std::size_t batch_size, Rng& rng) {
    return chunk(rng.permutation(count), batch_size);
}

std::vector<Batch> batches(std::size_t count, std::size_t batch_size, std::uint64_t shuffle_seed) {
    Rng rng(shuffle_seed);
    return batches(count, batch_size, rng);
}

template Dataset<float> gather(const Dataset<float>&, std::span<const std::size_t>);
template Dataset<double> gather(const Dataset<double>&, std::span<const std::size_t>);
template Dataset<float> titanic_dataset<float>(const TitanicFeatures&);
template Dataset<double> titanic_dataset<double>(const TitanicFeatures&);
template Tensor<float> MnistSet::images<float>() const;
template Tensor<double> MnistSet::images<double>() const;
template Dataset<float> mnist_dataset<float>(const MnistSet&);
template Dataset<double> mnist_dataset<double>(const MnistSet&);

} // namespace webnn
