#include "fedsched/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fedsched/errors.hpp"
#include "fedsched/rng.hpp"

namespace fedsched::fl {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4)) {
        throw IoError("idx: truncated header in " + path);
    }
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

void Dataset::validate() const {
    if (count < 1) throw ValidationError("dataset: needs at least one sample");
    if (dim < 1) throw ValidationError("dataset: feature dimension must be positive");
    if (classes < 2) throw ValidationError("dataset: needs at least two classes");
    if (features.size() != static_cast<std::size_t>(count) * static_cast<std::size_t>(dim)) {
        throw ValidationError("dataset: feature buffer size mismatch");
    }
    if (labels.size() != static_cast<std::size_t>(count)) {
        throw ValidationError("dataset: label count mismatch");
    }
    for (const auto label : labels) {
        if (label < 0 || label >= classes) {
            throw ValidationError("dataset: label outside [0, classes)");
        }
    }
}

SyntheticTask generate_synthetic(int dim, int classes, std::int64_t count, double separation,
                                 std::uint64_t seed, std::int64_t test_count) {
    if (dim < 1) throw ValidationError("synthetic data: dim must be positive");
    if (classes < 2) throw ValidationError("synthetic data: needs at least two classes");
    if (count < classes) throw ValidationError("synthetic data: need at least one sample per class");
    if (!(separation >= 0.0)) throw ValidationError("synthetic data: separation must be >= 0");
    if (test_count < 0) test_count = std::max<std::int64_t>(count / 4, classes);
    if (test_count < 1) throw ValidationError("synthetic data: test_count must be positive");

    std::vector<double> means(static_cast<std::size_t>(classes) * dim);
    {
        rng::SplitMix64 engine(rng::derive(seed, rng::stream_tag("means")));
        for (int c = 0; c < classes; ++c) {
            double* mean = means.data() + static_cast<std::size_t>(c) * dim;
            double norm = 0.0;
            while (norm <= 1e-12) {
                norm = 0.0;
                for (int j = 0; j < dim; ++j) {
                    mean[j] = engine.normal();
                    norm += mean[j] * mean[j];
                }
                norm = std::sqrt(norm);
            }
            for (int j = 0; j < dim; ++j) mean[j] *= separation / norm;
        }
    }

    const auto fill = [&](Dataset& out, std::int64_t rows, std::uint64_t stream) {
        out.count = rows;
        out.dim = dim;
        out.classes = classes;
        out.features.resize(static_cast<std::size_t>(rows) * dim);
        out.labels.resize(static_cast<std::size_t>(rows));
        rng::SplitMix64 engine(rng::derive(seed, stream));
        for (std::int64_t i = 0; i < rows; ++i) {
            const int label = static_cast<int>(i % classes);
            out.labels[static_cast<std::size_t>(i)] = label;
            const double* mean = means.data() + static_cast<std::size_t>(label) * dim;
            float* x = out.features.data() + static_cast<std::size_t>(i) * dim;
            for (int j = 0; j < dim; ++j) {
                x[j] = static_cast<float>(mean[j] + engine.normal());
            }
        }
    };
    SyntheticTask task;
    fill(task.train, count, rng::stream_tag("train"));
    fill(task.test, test_count, rng::stream_tag("test"));
    return task;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) throw IoError("idx: cannot open " + images_path);
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) throw IoError("idx: cannot open " + labels_path);

    const std::uint32_t images_magic = read_be32(images, images_path);
    if (images_magic != kImagesMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "0x%08x", images_magic);
        throw FormatError("idx: bad image magic " + std::string(buf) + " in " + images_path);
    }
    const std::uint32_t image_count = read_be32(images, images_path);
    const std::uint32_t rows = read_be32(images, images_path);
    const std::uint32_t cols = read_be32(images, images_path);

    const std::uint32_t labels_magic = read_be32(labels, labels_path);
    if (labels_magic != kLabelsMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "0x%08x", labels_magic);
        throw FormatError("idx: bad label magic " + std::string(buf) + " in " + labels_path);
    }
    const std::uint32_t label_count = read_be32(labels, labels_path);
    if (image_count != label_count) {
        throw ConsistencyError("idx: " + std::to_string(image_count) + " images but " +
                               std::to_string(label_count) + " labels");
    }
    if (image_count == 0 || rows == 0 || cols == 0) {
        throw FormatError("idx: empty image set in " + images_path);
    }

    const std::size_t pixel_count = std::size_t(image_count) * rows * cols;
    std::vector<unsigned char> pixels(pixel_count);
    if (!images.read(reinterpret_cast<char*>(pixels.data()),
                     static_cast<std::streamsize>(pixel_count))) {
        throw IoError("idx: truncated pixel data in " + images_path);
    }
    std::vector<unsigned char> raw_labels(image_count);
    if (!labels.read(reinterpret_cast<char*>(raw_labels.data()),
                     static_cast<std::streamsize>(image_count))) {
        throw IoError("idx: truncated label data in " + labels_path);
    }

    Dataset out;
    out.count = image_count;
    out.dim = static_cast<int>(rows * cols);
    out.features.resize(pixel_count);
    for (std::size_t i = 0; i < pixel_count; ++i) {
        out.features[i] = static_cast<float>(pixels[i]) / 255.0f;
    }
    out.labels.resize(image_count);
    int max_label = 0;
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        out.labels[i] = raw_labels[i];
        max_label = std::max(max_label, static_cast<int>(raw_labels[i]));
    }
    out.classes = max_label + 1;
    if (out.classes < 2) out.classes = 2;
    out.validate();
    return out;
}

namespace {

std::vector<std::int64_t> split_sizes(std::int64_t count, int n_clients) {
    const std::int64_t base = count / n_clients;
    const std::int64_t extra = count % n_clients;
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(n_clients));
    for (int c = 0; c < n_clients; ++c) {
        sizes[static_cast<std::size_t>(c)] = base + (c < extra ? 1 : 0);
    }
    return sizes;
}

std::vector<std::vector<std::int32_t>> partition_iid(const Dataset& data, int n_clients,
                                                     std::uint64_t seed) {
    std::vector<std::int32_t> order(static_cast<std::size_t>(data.count));
    std::iota(order.begin(), order.end(), 0);
    rng::SplitMix64 engine(rng::derive(seed, rng::stream_tag("iid")));
    engine.shuffle(order);
    const auto sizes = split_sizes(data.count, n_clients);
    std::vector<std::vector<std::int32_t>> shards(static_cast<std::size_t>(n_clients));
    std::size_t next = 0;
    for (int c = 0; c < n_clients; ++c) {
        auto& shard = shards[static_cast<std::size_t>(c)];
        for (std::int64_t j = 0; j < sizes[static_cast<std::size_t>(c)]; ++j) {
            shard.push_back(order[next++]);
        }
    }
    return shards;
}

std::vector<std::vector<std::int32_t>> partition_dirichlet(const Dataset& data, double alpha,
                                                           int n_clients, std::uint64_t seed) {
    const int classes = data.classes;
    std::vector<std::vector<std::int32_t>> by_class(static_cast<std::size_t>(classes));
    for (std::int64_t i = 0; i < data.count; ++i) {
        by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(
            static_cast<std::int32_t>(i));
    }
    for (int y = 0; y < classes; ++y) {
        rng::SplitMix64 engine(
            rng::derive(seed, rng::stream_tag("class"), static_cast<std::uint64_t>(y)));
        engine.shuffle(by_class[static_cast<std::size_t>(y)]);
    }

    const auto sizes = split_sizes(data.count, n_clients);
    std::vector<std::vector<std::int32_t>> shards(static_cast<std::size_t>(n_clients));

    // Per-client class quotas: Dirichlet mixture scaled to the shard size,
    // rounded by largest remainder so each client's quotas sum exactly.
    std::vector<double> quota(static_cast<std::size_t>(n_clients) * classes);
    std::vector<std::int64_t> take(static_cast<std::size_t>(n_clients) * classes);
    for (int c = 0; c < n_clients; ++c) {
        rng::SplitMix64 engine(
            rng::derive(seed, rng::stream_tag("mix"), static_cast<std::uint64_t>(c)));
        const auto weights = engine.dirichlet(alpha, classes);
        std::int64_t assigned = 0;
        std::vector<std::pair<double, int>> fractional(static_cast<std::size_t>(classes));
        for (int y = 0; y < classes; ++y) {
            const auto idx = static_cast<std::size_t>(c) * classes + y;
            quota[idx] = weights[static_cast<std::size_t>(y)] *
                         static_cast<double>(sizes[static_cast<std::size_t>(c)]);
            take[idx] = static_cast<std::int64_t>(std::floor(quota[idx]));
            assigned += take[idx];
            fractional[static_cast<std::size_t>(y)] = {quota[idx] - std::floor(quota[idx]), y};
        }
        std::sort(fractional.begin(), fractional.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::int64_t deficit = sizes[static_cast<std::size_t>(c)] - assigned;
        for (std::int64_t j = 0; j < deficit; ++j) {
            take[static_cast<std::size_t>(c) * classes +
                 fractional[static_cast<std::size_t>(j % classes)].second] += 1;
        }
    }

    // Repair class supply: move units from oversubscribed classes to
    // undersubscribed ones, always from the client furthest above its quota.
    std::vector<std::int64_t> demand(static_cast<std::size_t>(classes), 0);
    for (int c = 0; c < n_clients; ++c) {
        for (int y = 0; y < classes; ++y) {
            demand[static_cast<std::size_t>(y)] += take[static_cast<std::size_t>(c) * classes + y];
        }
    }
    for (;;) {
        int over = -1, under = -1;
        std::int64_t over_gap = 0, under_gap = 0;
        for (int y = 0; y < classes; ++y) {
            const std::int64_t gap =
                demand[static_cast<std::size_t>(y)] -
                static_cast<std::int64_t>(by_class[static_cast<std::size_t>(y)].size());
            if (gap > over_gap) {
                over_gap = gap;
                over = y;
            }
            if (gap < under_gap) {
                under_gap = gap;
                under = y;
            }
        }
        if (over < 0) break;  // demand matches supply everywhere
        int donor = -1;
        double donor_excess = -1e300;
        for (int c = 0; c < n_clients; ++c) {
            const auto idx = static_cast<std::size_t>(c) * classes + over;
            if (take[idx] <= 0) continue;
            const double excess = static_cast<double>(take[idx]) - quota[idx];
            if (excess > donor_excess) {
                donor_excess = excess;
                donor = c;
            }
        }
        if (donor < 0) throw std::logic_error("partition: repair ran out of donors");
        take[static_cast<std::size_t>(donor) * classes + over] -= 1;
        take[static_cast<std::size_t>(donor) * classes + under] += 1;
        demand[static_cast<std::size_t>(over)] -= 1;
        demand[static_cast<std::size_t>(under)] += 1;
    }

    // Deal each class stack out according to the repaired quotas.
    std::vector<std::size_t> cursor(static_cast<std::size_t>(classes), 0);
    for (int c = 0; c < n_clients; ++c) {
        for (int y = 0; y < classes; ++y) {
            const std::int64_t want = take[static_cast<std::size_t>(c) * classes + y];
            auto& stack = by_class[static_cast<std::size_t>(y)];
            auto& at = cursor[static_cast<std::size_t>(y)];
            for (std::int64_t j = 0; j < want; ++j) {
                shards[static_cast<std::size_t>(c)].push_back(stack[at++]);
            }
        }
    }
    return shards;
}

}  // namespace

std::vector<std::vector<std::int32_t>> partition(const Dataset& data, const PartitionSpec& spec,
                                                 int n_clients, std::uint64_t seed) {
    data.validate();
    if (n_clients < 1) throw ValidationError("partition: need at least one client");
    if (data.count < n_clients) throw ValidationError("partition: fewer samples than clients");
    if (spec.kind == PartitionKind::Dirichlet && !(spec.alpha > 0.0)) {
        throw ValidationError("partition: dirichlet alpha must be positive");
    }
    if (spec.kind == PartitionKind::IID) return partition_iid(data, n_clients, seed);
    return partition_dirichlet(data, spec.alpha, n_clients, seed);
}

}  // namespace fedsched::fl
