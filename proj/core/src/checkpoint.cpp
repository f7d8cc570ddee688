#include "flowvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "flowvae/errors.hpp"

namespace flowvae {

namespace {

// All multi-byte values are little-endian on disk regardless of host order.

void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

void put_u16(std::ostream& os, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_i64(std::ostream& os, std::int64_t v) { put_u64(os, static_cast<std::uint64_t>(v)); }

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& os, const Tensor& t) {
    for (double v : t.values()) put_f64(os, v);
}

std::uint8_t get_u8(std::istream& is) {
    const int c = is.get();
    if (c == EOF) throw DataError("checkpoint: truncated file");
    return static_cast<std::uint8_t>(c);
}

std::uint16_t get_u16(std::istream& is) {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(get_u8(is)) << (8 * i);
    return v;
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(is)) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(get_u8(is)) << (8 * i);
    return v;
}

std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get_u64(is)); }

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

std::string get_string(std::istream& is) {
    const std::uint32_t len = get_u32(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw DataError("checkpoint: truncated string");
    return s;
}

void get_tensor(std::istream& is, Tensor& t) {
    for (double& v : t.values()) v = get_f64(is);
}

enum LayerTag : std::uint8_t {
    kDense = 0,
    kConv = 1,
    kTConv = 2,
    kBatchNorm = 3,
    kToChannels = 4,
    kFlatten = 5,
};

void put_dense(std::ostream& os, const DenseLayer& d) {
    put_u32(os, static_cast<std::uint32_t>(d.in_width()));
    put_u32(os, static_cast<std::uint32_t>(d.out_width()));
    put_u8(os, static_cast<std::uint8_t>(d.activation()));
    put_tensor(os, d.weights());
    put_tensor(os, d.bias());
}

DenseLayer get_dense(std::istream& is) {
    const std::uint32_t in = get_u32(is);
    const std::uint32_t out = get_u32(is);
    const auto act = static_cast<Activation>(get_u8(is));
    DenseLayer d(in, out, act);
    get_tensor(is, d.weights());
    get_tensor(is, d.bias());
    return d;
}

void put_layer(std::ostream& os, const Layer& layer) {
    if (const auto* d = dynamic_cast<const DenseLayer*>(&layer)) {
        put_u8(os, kDense);
        put_dense(os, *d);
    } else if (const auto* c = dynamic_cast<const Conv1DLayer*>(&layer)) {
        put_u8(os, kConv);
        put_u32(os, static_cast<std::uint32_t>(c->geom().in_len));
        put_u32(os, static_cast<std::uint32_t>(c->geom().kernel));
        put_u32(os, static_cast<std::uint32_t>(c->geom().stride));
        put_u8(os, c->geom().padding == Padding::half ? 1 : 0);
        put_u32(os, static_cast<std::uint32_t>(c->c_in()));
        put_u32(os, static_cast<std::uint32_t>(c->c_out()));
        put_u8(os, static_cast<std::uint8_t>(c->activation()));
        put_tensor(os, c->kernel());
        put_tensor(os, c->bias());
    } else if (const auto* t = dynamic_cast<const TransposedConv1DLayer*>(&layer)) {
        put_u8(os, kTConv);
        put_u32(os, static_cast<std::uint32_t>(t->mirror().in_len));
        put_u32(os, static_cast<std::uint32_t>(t->mirror().kernel));
        put_u32(os, static_cast<std::uint32_t>(t->mirror().stride));
        put_u8(os, t->mirror().padding == Padding::half ? 1 : 0);
        put_u32(os, static_cast<std::uint32_t>(t->c_in()));
        put_u32(os, static_cast<std::uint32_t>(t->c_out()));
        put_u8(os, static_cast<std::uint8_t>(t->activation()));
        put_tensor(os, t->kernel());
        put_tensor(os, t->bias());
    } else if (const auto* bn = dynamic_cast<const BatchNorm1D*>(&layer)) {
        put_u8(os, kBatchNorm);
        put_u32(os, static_cast<std::uint32_t>(bn->channels()));
        put_f64(os, bn->momentum());
        put_f64(os, bn->epsilon());
        put_tensor(os, bn->gamma());
        put_tensor(os, bn->beta());
        put_tensor(os, bn->running_mean());
        put_tensor(os, bn->running_var());
    } else if (dynamic_cast<const ToChannelsLayer*>(&layer)) {
        put_u8(os, kToChannels);
    } else if (dynamic_cast<const FlattenLayer*>(&layer)) {
        put_u8(os, kFlatten);
    } else {
        throw ArgumentError("checkpoint: unknown layer kind " + layer.kind());
    }
}

std::unique_ptr<Layer> get_layer(std::istream& is) {
    const std::uint8_t tag = get_u8(is);
    switch (tag) {
        case kDense:
            return std::make_unique<DenseLayer>(get_dense(is));
        case kConv: {
            const std::uint32_t in_len = get_u32(is);
            const std::uint32_t k = get_u32(is);
            const std::uint32_t s = get_u32(is);
            const Padding pad = get_u8(is) ? Padding::half : Padding::valid;
            const std::uint32_t c_in = get_u32(is);
            const std::uint32_t c_out = get_u32(is);
            const auto act = static_cast<Activation>(get_u8(is));
            auto layer = std::make_unique<Conv1DLayer>(in_len, static_cast<int>(k),
                                                       static_cast<int>(s), pad, c_in, c_out, act);
            get_tensor(is, layer->kernel());
            get_tensor(is, layer->bias());
            return layer;
        }
        case kTConv: {
            const std::uint32_t in_len = get_u32(is);
            const std::uint32_t k = get_u32(is);
            const std::uint32_t s = get_u32(is);
            const Padding pad = get_u8(is) ? Padding::half : Padding::valid;
            const std::uint32_t c_in = get_u32(is);
            const std::uint32_t c_out = get_u32(is);
            const auto act = static_cast<Activation>(get_u8(is));
            const Conv1DGeom mirror = make_conv1d_geom(in_len, static_cast<int>(k),
                                                       static_cast<int>(s), pad);
            auto layer = std::make_unique<TransposedConv1DLayer>(mirror, c_in, c_out, act);
            get_tensor(is, layer->kernel());
            get_tensor(is, layer->bias());
            return layer;
        }
        case kBatchNorm: {
            const std::uint32_t channels = get_u32(is);
            const double momentum = get_f64(is);
            const double epsilon = get_f64(is);
            auto layer = std::make_unique<BatchNorm1D>(channels, momentum, epsilon);
            get_tensor(is, layer->gamma());
            get_tensor(is, layer->beta());
            get_tensor(is, layer->running_mean());
            get_tensor(is, layer->running_var());
            return layer;
        }
        case kToChannels:
            return std::make_unique<ToChannelsLayer>();
        case kFlatten:
            return std::make_unique<FlattenLayer>();
        default:
            throw DataError("checkpoint: unknown layer tag " + std::to_string(tag));
    }
}

void put_schema(std::ostream& os, const FeatureSchema& schema) {
    put_u32(os, static_cast<std::uint32_t>(schema.feature_names.size()));
    for (const auto& name : schema.feature_names) put_string(os, name);
    put_string(os, schema.label_column);
    put_u32(os, static_cast<std::uint32_t>(schema.class_names.size()));
    for (const auto& name : schema.class_names) put_string(os, name);
    put_i64(os, schema.src_ip_feature ? static_cast<std::int64_t>(*schema.src_ip_feature) : -1);
    put_i64(os, schema.dst_ip_feature ? static_cast<std::int64_t>(*schema.dst_ip_feature) : -1);
}

FeatureSchema get_schema(std::istream& is) {
    FeatureSchema schema;
    const std::uint32_t nf = get_u32(is);
    schema.feature_names.reserve(nf);
    for (std::uint32_t i = 0; i < nf; ++i) schema.feature_names.push_back(get_string(is));
    schema.label_column = get_string(is);
    const std::uint32_t nc = get_u32(is);
    schema.class_names.reserve(nc);
    for (std::uint32_t i = 0; i < nc; ++i) schema.class_names.push_back(get_string(is));
    const std::int64_t src = get_i64(is);
    const std::int64_t dst = get_i64(is);
    if (src >= 0) schema.src_ip_feature = static_cast<std::size_t>(src);
    if (dst >= 0) schema.dst_ip_feature = static_cast<std::size_t>(dst);
    return schema;
}

void put_dvec(std::ostream& os, const std::vector<double>& v) {
    put_u32(os, static_cast<std::uint32_t>(v.size()));
    for (double x : v) put_f64(os, x);
}

std::vector<double> get_dvec(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::vector<double> v(n);
    for (double& x : v) x = get_f64(is);
    return v;
}

void put_scaling(std::ostream& os, const ScalingSpec& spec) {
    put_u8(os, static_cast<std::uint8_t>(spec.kind));
    put_dvec(os, spec.lo);
    put_dvec(os, spec.hi);
    put_dvec(os, spec.mean);
    put_dvec(os, spec.stddev);
}

ScalingSpec get_scaling(std::istream& is) {
    ScalingSpec spec;
    spec.kind = static_cast<ScaleKind>(get_u8(is));
    spec.lo = get_dvec(is);
    spec.hi = get_dvec(is);
    spec.mean = get_dvec(is);
    spec.stddev = get_dvec(is);
    return spec;
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path);
    os.write("FVAE", 4);
    put_u16(os, kCheckpointVersion);
    put_string(os, model.preset.name);

    const std::uint32_t enc_count = static_cast<std::uint32_t>(model.vae.encoder.size());
    const std::uint32_t dec_count = static_cast<std::uint32_t>(model.vae.decoder.size());
    put_u32(os, enc_count + dec_count + 2);  // total, mu/logvar included
    put_u32(os, enc_count);
    put_u32(os, dec_count);
    put_u32(os, static_cast<std::uint32_t>(model.vae.input_width));
    put_u32(os, static_cast<std::uint32_t>(model.vae.latent_dim));
    for (std::size_t i = 0; i < model.vae.encoder.size(); ++i) {
        put_layer(os, model.vae.encoder[i]);
    }
    put_u8(os, kDense);
    put_dense(os, model.vae.mu_layer);
    put_u8(os, kDense);
    put_dense(os, model.vae.logvar_layer);
    for (std::size_t i = 0; i < model.vae.decoder.size(); ++i) {
        put_layer(os, model.vae.decoder[i]);
    }

    if (model.is_lbd) {
        put_u8(os, 1);
        put_f64(os, model.lbd.weight);
        put_f64(os, model.lbd.bias);
    } else {
        put_u8(os, 0);
        put_u32(os, static_cast<std::uint32_t>(model.llc.num_classes));
        put_dense(os, model.llc.fc);
    }

    put_schema(os, model.schema);
    put_scaling(os, model.scaling);
    if (!os) throw DataError("write failed: " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FVAE", 4) != 0) {
        throw DataError("not a checkpoint file: " + path);
    }
    const std::uint16_t version = get_u16(is);
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    TrainedModel model;
    const std::string preset_name = get_string(is);
    model.preset = find_preset(preset_name);

    const std::uint32_t total = get_u32(is);
    const std::uint32_t enc_count = get_u32(is);
    const std::uint32_t dec_count = get_u32(is);
    if (total != enc_count + dec_count + 2) {
        throw DataError("checkpoint: inconsistent layer counts");
    }
    model.vae.input_width = get_u32(is);
    model.vae.latent_dim = get_u32(is);
    for (std::uint32_t i = 0; i < enc_count; ++i) {
        model.vae.encoder.add(get_layer(is));
    }
    if (get_u8(is) != kDense) throw DataError("checkpoint: expected dense mu layer");
    model.vae.mu_layer = get_dense(is);
    model.vae.mu_layer.set_name("mu");
    if (get_u8(is) != kDense) throw DataError("checkpoint: expected dense logvar layer");
    model.vae.logvar_layer = get_dense(is);
    model.vae.logvar_layer.set_name("logvar");
    for (std::uint32_t i = 0; i < dec_count; ++i) {
        model.vae.decoder.add(get_layer(is));
    }

    const std::uint8_t head_kind = get_u8(is);
    if (head_kind == 1) {
        model.is_lbd = true;
        model.lbd.weight = get_f64(is);
        model.lbd.bias = get_f64(is);
    } else if (head_kind == 0) {
        model.is_lbd = false;
        model.llc.num_classes = get_u32(is);
        model.llc.fc = get_dense(is);
        model.llc.fc.set_name("head");
    } else {
        throw DataError("checkpoint: unknown head kind");
    }

    model.schema = get_schema(is);
    model.scaling = get_scaling(is);
    return model;
}

}  // namespace flowvae
