#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "resinsort/checkpoint.hpp"
#include "resinsort/dataset.hpp"
#include "resinsort/eval.hpp"
#include "resinsort/image.hpp"
#include "resinsort/layers.hpp"
#include "resinsort/nets.hpp"
#include "resinsort/novelty.hpp"
#include "resinsort/synth.hpp"
#include "resinsort/trainer.hpp"

namespace py = pybind11;
using namespace resinsort;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

std::vector<EmbeddingVector> to_rows(const Array& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-D array of rows");
    const auto n = static_cast<size_t>(a.shape(0)), w = static_cast<size_t>(a.shape(1));
    std::vector<EmbeddingVector> rows(n);
    for (size_t i = 0; i < n; ++i) rows[i].assign(a.data() + i * w, a.data() + (i + 1) * w);
    return rows;
}

Array from_rows(const std::vector<EmbeddingVector>& rows, size_t width) {
    Array out({static_cast<py::ssize_t>(rows.size()), static_cast<py::ssize_t>(width)});
    for (size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), out.mutable_data() + i * width);
    return out;
}

py::dict manifest_dict(const DatasetManifest& m) {
    py::list classes, records;
    for (const auto& c : m.classes) classes.append(py::dict(py::arg("code") = c.code, py::arg("name") = c.name));
    for (const auto& r : m.records)
        records.append(py::dict(py::arg("id") = r.id, py::arg("class_id") = r.class_id,
                                py::arg("split") = to_string(r.split), py::arg("path") = r.path));
    return py::dict(py::arg("classes") = classes, py::arg("records") = records);
}

struct Embeddings {
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<std::string> splits;
    Array rows;
};

Embeddings embed_dataset(const Checkpoint& ck, const std::filesystem::path& root, std::uint64_t seed) {
    const auto manifest = open_dataset(root, seed);
    const auto images = load_images(manifest, trunk_of(ck.model).config().height, ck.stats);
    const auto index = build_index(ck.model, manifest, images);
    Embeddings e;
    e.ids = index.ids;
    e.labels = index.labels;
    for (const auto& r : manifest.records) e.splits.push_back(to_string(r.split));
    e.rows = from_rows(index.rows, index.width());
    return e;
}

}  // namespace

PYBIND11_MODULE(_resinsort, m) {
    m.doc() = "Siamese/triplet embeddings and novelty detection for resin-code images";

    py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def(
        "conv2d",
        [](const Array& input, const Array& filters, const Array& bias, size_t stride, size_t padding) {
            ConvLayer layer{to_tensor(filters), to_tensor(bias), stride, padding};
            return to_array(conv2d_forward(to_tensor(input), layer));
        },
        py::arg("input"), py::arg("filters"), py::arg("bias"), py::arg("stride") = 1, py::arg("padding") = 0,
        "HWC input, filters shaped (count, kh, kw, channels).");
    m.def("relu", [](const Array& x) { return to_array(relu(to_tensor(x))); });
    m.def(
        "maxpool", [](const Array& x, size_t window, size_t stride) {
            return to_array(maxpool_forward(to_tensor(x), window, stride).output);
        },
        py::arg("input"), py::arg("window"), py::arg("stride"));
    m.def(
        "fc", [](const Array& x, const Array& w, const Array& b) {
            return to_array(fc_forward(to_tensor(x), FcLayer{to_tensor(w), to_tensor(b)}));
        },
        py::arg("input"), py::arg("weights"), py::arg("bias"));
    m.def(
        "resize_bilinear", [](const Array& x, size_t h, size_t w) { return to_array(resize_bilinear(to_tensor(x), h, w)); },
        py::arg("image"), py::arg("height"), py::arg("width"));

    m.def("siamese_loss", &siamese_loss, py::arg("p"), py::arg("y"));
    m.def(
        "triplet_loss",
        [](const std::vector<double>& a, const std::vector<double>& p, const std::vector<double>& n, double margin) {
            return triplet_loss(a, p, n, margin);
        },
        py::arg("anchor"), py::arg("positive"), py::arg("negative"), py::arg("margin") = kDefaultMargin);

    m.def(
        "synth",
        [](const std::filesystem::path& out, size_t classes, size_t per_class, std::uint64_t seed, size_t image_size) {
            return manifest_dict(synth_generate({classes, per_class, seed, image_size}, out));
        },
        py::arg("out"), py::arg("classes") = 5, py::arg("per_class") = 100, py::arg("seed") = 7,
        py::arg("image_size") = 64);
    m.def(
        "open_dataset", [](const std::filesystem::path& root, std::uint64_t seed) {
            return manifest_dict(open_dataset(root, seed));
        },
        py::arg("root"), py::arg("seed") = 0);

    py::class_<Checkpoint>(m, "Model")
        .def_property_readonly("kind", [](const Checkpoint& c) { return to_string(kind_of(c.model)); })
        .def_property_readonly("input_size", [](const Checkpoint& c) { return trunk_of(c.model).config().height; })
        .def_property_readonly("embedding_width",
                               [](const Checkpoint& c) { return trunk_of(c.model).config().embedding_width; })
        .def(
            "embed", [](const Checkpoint& c, const Array& image) { return embed(c.model, to_tensor(image)); },
            py::arg("image"), "Embedding of one preprocessed HWC image.")
        .def(
            "embed_dataset",
            [](const Checkpoint& c, const std::filesystem::path& root, std::uint64_t seed) {
                auto e = embed_dataset(c, root, seed);
                return py::dict(py::arg("ids") = e.ids, py::arg("labels") = e.labels, py::arg("splits") = e.splits,
                                py::arg("rows") = e.rows);
            },
            py::arg("root"), py::arg("seed") = 0)
        .def("save", [](const Checkpoint& c, const std::filesystem::path& path) { save_checkpoint(c.model, c.stats, path); });

    m.def("load_model", [](const std::filesystem::path& path) { return load_checkpoint(path); }, py::arg("path"));

    m.def(
        "train",
        [](const std::filesystem::path& dataset, const std::string& kind, const std::string& profile, size_t epochs,
           size_t samples_per_epoch, size_t batch_size, size_t val_samples, double lr, double momentum, double margin,
           std::uint64_t seed, std::optional<std::string> holdout) {
            TrainConfig config = TrainConfig::defaults(parse_network_kind(kind));
            config.profile = profile;
            if (epochs > 0) config.epochs = epochs;
            config.samples_per_epoch = samples_per_epoch;
            config.batch_size = batch_size;
            config.val_samples = val_samples;
            config.learning_rate = lr;
            config.momentum = momentum;
            config.margin = margin;
            config.seed = seed;
            const auto manifest = open_dataset(dataset, seed);
            if (holdout) config.holdout_class = manifest.find_class(*holdout);
            config.validate();
            TrainResult result;
            ChannelStats stats;
            {
                py::gil_scoped_release release;
                const auto images = load_images(manifest, config.trunk().height, config.stats_scope);
                stats = images.stats;
                result = train(config, manifest, images);
            }
            py::list history;
            for (const auto& e : result.history.epochs) history.append(py::make_tuple(e.epoch, e.train_loss, e.val_loss));
            return py::make_tuple(Checkpoint{std::move(result.model), stats}, history);
        },
        py::arg("dataset"), py::arg("kind") = "triplet", py::arg("profile") = "mini", py::arg("epochs") = 0,
        py::arg("samples_per_epoch") = 5000, py::arg("batch_size") = 50, py::arg("val_samples") = 1000,
        py::arg("lr") = 0.001, py::arg("momentum") = 0.9, py::arg("margin") = kDefaultMargin, py::arg("seed") = 0,
        py::arg("holdout") = py::none(),
        "Returns (model, [(epoch, train_loss, val_loss), ...]). epochs=0 uses 50 (siamese) or 100 (triplet).");

    py::class_<ProjectionModel>(m, "Projection")
        .def_property_readonly("method", [](const ProjectionModel& p) { return to_string(p.kind); })
        .def_readonly("mean", &ProjectionModel::mean)
        .def_readonly("eigenvalues", &ProjectionModel::eigenvalues)
        .def_property_readonly("directions", [](const ProjectionModel& p) { return from_rows(p.directions, p.width()); })
        .def("project", [](const ProjectionModel& p, const Array& rows) {
            return from_rows(project(p, to_rows(rows)), p.dims());
        });
    m.def("fit_pca", [](const Array& rows, size_t dims) { return fit_pca(to_rows(rows), dims); }, py::arg("rows"),
          py::arg("dims"));
    m.def(
        "fit_lda", [](const Array& rows, const std::vector<int>& labels, size_t dims) {
            return fit_lda(to_rows(rows), labels, dims);
        },
        py::arg("rows"), py::arg("labels"), py::arg("dims"));

    m.def(
        "detect_outliers",
        [](const Array& items, const Array& reference, double radius, size_t min_neighbors) {
            return detect_outliers(to_rows(items), to_rows(reference), OutlierParams{radius, min_neighbors});
        },
        py::arg("items"), py::arg("reference"), py::arg("radius"), py::arg("min_neighbors"),
        "True where fewer than min_neighbors reference points lie within radius.");

    m.def(
        "knn_classify",
        [](const Array& rows, const std::vector<int>& labels, const std::vector<double>& query, size_t k) {
            EmbeddingIndex index;
            index.rows = to_rows(rows);
            index.labels = labels;
            for (size_t i = 0; i < index.rows.size(); ++i) index.ids.push_back(std::to_string(i));
            index.validate();
            return knn_classify(index, query, "", k);
        },
        py::arg("rows"), py::arg("labels"), py::arg("query"), py::arg("k"));
}
