#include "kneebench/unetconv.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

#include "kneebench/rng.hpp"

namespace kb {

namespace {

std::size_t scale_channels(std::size_t c, double s) {
    const auto scaled = static_cast<std::size_t>(std::llround(c * s));
    return scaled < 1 ? 1 : scaled;
}

ConvParams make_conv(std::size_t c_out, std::size_t c_in, std::size_t k, Rng& rng) {
    ConvParams p;
    p.weight = ag::make_tensor({c_out, c_in, k}, true);
    p.bias = ag::make_tensor({c_out}, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k));
    for (auto& v : p.weight->data)
        v = rng.uniform(-bound, bound);
    for (auto& v : p.bias->data)
        v = rng.uniform(-bound, bound);
    return p;
}

BatchNormParams make_bn(std::size_t c) {
    BatchNormParams p;
    p.gamma = ag::make_tensor({c}, true);
    std::fill(p.gamma->data.begin(), p.gamma->data.end(), 1.0);
    p.beta = ag::make_tensor({c}, true);
    p.running_mean.assign(c, 0.0);
    p.running_var.assign(c, 1.0);
    return p;
}

} // namespace

std::vector<std::size_t> ModelConfig::scaled_encoder() const {
    std::vector<std::size_t> out;
    for (std::size_t c : encoder_channels)
        out.push_back(scale_channels(c, width_scale));
    return out;
}

std::size_t ModelConfig::scaled_bottleneck() const {
    return scale_channels(bottleneck_channels, width_scale);
}

std::vector<std::size_t> ModelConfig::scaled_tail() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i + 1 < tail_channels.size(); ++i)
        out.push_back(scale_channels(tail_channels[i], width_scale));
    out.push_back(1);
    return out;
}

void ModelConfig::validate() const {
    if (input_channels < 1)
        throw ConfigError("model config: input_channels must be >= 1");
    if (encoder_channels.empty())
        throw ConfigError("model config: encoder_channels must not be empty");
    if (tail_channels.empty() || tail_channels.back() != 1)
        throw ConfigError("model config: last tail channel must be 1");
    if (width_scale <= 0.0)
        throw ConfigError("model config: width_scale must be positive");
    std::size_t div = std::size_t{1} << encoder_channels.size();
    if (length == 0 || length % div != 0)
        throw ConfigError("model config: length must be divisible by 2^levels");
    if (kernel < 1 || tail_kernel < 1)
        throw ConfigError("model config: kernels must be >= 1");
}

std::vector<std::pair<std::string, ag::TensorPtr>> Model::named_params() {
    std::vector<std::pair<std::string, ag::TensorPtr>> out;
    const auto add_conv = [&](const std::string& name, ConvParams& c) {
        out.emplace_back(name + ".weight", c.weight);
        out.emplace_back(name + ".bias", c.bias);
    };
    const auto add_bn = [&](const std::string& name, BatchNormParams& b) {
        out.emplace_back(name + ".gamma", b.gamma);
        out.emplace_back(name + ".beta", b.beta);
    };
    for (std::size_t i = 0; i < enc_convs.size(); ++i) {
        add_conv("enc" + std::to_string(i) + ".conv", enc_convs[i]);
        add_bn("enc" + std::to_string(i) + ".bn", enc_bns[i]);
    }
    add_conv("bottleneck", bottleneck);
    for (std::size_t i = 0; i < dec_tconvs.size(); ++i) {
        add_conv("dec" + std::to_string(i) + ".tconv", dec_tconvs[i]);
        add_bn("dec" + std::to_string(i) + ".bn", dec_bns[i]);
        add_conv("dec" + std::to_string(i) + ".conv", dec_convs[i]);
    }
    for (std::size_t i = 0; i < tail_convs.size(); ++i)
        add_conv("tail" + std::to_string(i), tail_convs[i]);
    return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> Model::named_buffers() {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    for (std::size_t i = 0; i < enc_bns.size(); ++i) {
        out.emplace_back("enc" + std::to_string(i) + ".bn.running_mean",
                         &enc_bns[i].running_mean);
        out.emplace_back("enc" + std::to_string(i) + ".bn.running_var", &enc_bns[i].running_var);
    }
    for (std::size_t i = 0; i < dec_bns.size(); ++i) {
        out.emplace_back("dec" + std::to_string(i) + ".bn.running_mean",
                         &dec_bns[i].running_mean);
        out.emplace_back("dec" + std::to_string(i) + ".bn.running_var", &dec_bns[i].running_var);
    }
    return out;
}

std::size_t Model::param_count() {
    std::size_t n = 0;
    for (const auto& [name, t] : named_params())
        n += t->size();
    return n;
}

Model build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    Rng rng(seed);

    const auto enc = config.scaled_encoder();
    const std::size_t bneck = config.scaled_bottleneck();
    const auto tail = config.scaled_tail();

    std::size_t c_prev = config.input_channels;
    for (std::size_t c : enc) {
        m.enc_convs.push_back(make_conv(c, c_prev, config.kernel, rng));
        m.enc_bns.push_back(make_bn(c));
        c_prev = c;
    }
    m.bottleneck = make_conv(bneck, c_prev, config.kernel, rng);

    // Decoder, deepest level first: halve with the transposed conv, concatenate
    // the same-length encoder activation, then reduce back to the halved width.
    std::size_t c_in = bneck;
    for (std::size_t level = enc.size(); level-- > 0;) {
        const std::size_t c_half = std::max<std::size_t>(1, c_in / 2);
        m.dec_tconvs.push_back(make_conv(c_half, c_in, 2, rng));
        m.dec_bns.push_back(make_bn(c_half));
        m.dec_convs.push_back(make_conv(c_half, c_half + enc[level], config.kernel, rng));
        c_in = c_half;
    }

    for (std::size_t c : tail) {
        m.tail_convs.push_back(make_conv(c, c_in, config.tail_kernel, rng));
        c_in = c;
    }
    return m;
}

ag::TensorPtr forward(Model& model, ag::Graph& g, const ag::TensorPtr& batch, bool train) {
    if (batch->shape.size() != 3 || batch->shape[1] != model.config.input_channels ||
        batch->shape[2] != model.config.length)
        throw ShapeMismatch("forward: batch must be B x input_channels x length");

    std::vector<ag::TensorPtr> skips;
    ag::TensorPtr h = batch;
    for (std::size_t i = 0; i < model.enc_convs.size(); ++i) {
        h = g.conv1d(h, model.enc_convs[i].weight, model.enc_convs[i].bias);
        h = g.batchnorm1d(h, model.enc_bns[i].gamma, model.enc_bns[i].beta,
                          model.enc_bns[i].running_mean, model.enc_bns[i].running_var, train,
                          kBnMomentum, kBnEps);
        h = g.relu(h);
        skips.push_back(h);
        h = g.maxpool1d(h);
    }
    h = g.conv1d(h, model.bottleneck.weight, model.bottleneck.bias);

    for (std::size_t i = 0; i < model.dec_tconvs.size(); ++i) {
        h = g.transposed_conv1d(h, model.dec_tconvs[i].weight, model.dec_tconvs[i].bias);
        h = g.batchnorm1d(h, model.dec_bns[i].gamma, model.dec_bns[i].beta,
                          model.dec_bns[i].running_mean, model.dec_bns[i].running_var, train,
                          kBnMomentum, kBnEps);
        h = g.relu(h);
        h = g.concat_channels(h, skips[skips.size() - 1 - i]);
        h = g.conv1d(h, model.dec_convs[i].weight, model.dec_convs[i].bias);
    }

    for (auto& conv : model.tail_convs)
        h = g.conv1d(h, conv.weight, conv.bias);
    return g.sigmoid(h);
}

std::vector<double> predict(Model& model, const std::vector<double>& xs,
                            const std::vector<double>& ys) {
    if (xs.size() != model.config.length || ys.size() != model.config.length)
        throw ShapeMismatch("predict: series length must equal config.length");
    auto in = ag::make_tensor({1, 2, model.config.length});
    std::copy(xs.begin(), xs.end(), in->data.begin());
    std::copy(ys.begin(), ys.end(), in->data.begin() + model.config.length);
    ag::Graph g;
    auto out = forward(model, g, in, false);
    return out->data;
}

namespace {

void put_u16(std::string& buf, std::uint16_t v) {
    for (int i = 0; i < 2; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(buf, bits);
}

void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.append(s);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw FormatError("checkpoint: truncated file");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i)
            v |= static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_record(std::string& buf, const std::string& name, const std::vector<std::size_t>& dims,
                const std::vector<double>& values) {
    put_str(buf, name);
    put_u32(buf, static_cast<std::uint32_t>(dims.size()));
    for (std::size_t d : dims)
        put_u64(buf, d);
    for (double v : values)
        put_f64(buf, v);
}

} // namespace

void save_checkpoint(Model& model, const std::string& path) {
    std::string buf;
    buf.append("KNEE");
    put_u16(buf, kCheckpointVersion);

    const auto& c = model.config;
    put_u32(buf, static_cast<std::uint32_t>(c.input_channels));
    put_u64(buf, c.length);
    put_u32(buf, static_cast<std::uint32_t>(c.encoder_channels.size()));
    for (std::size_t v : c.encoder_channels)
        put_u32(buf, static_cast<std::uint32_t>(v));
    put_u32(buf, static_cast<std::uint32_t>(c.bottleneck_channels));
    put_u32(buf, static_cast<std::uint32_t>(c.kernel));
    put_u32(buf, static_cast<std::uint32_t>(c.tail_channels.size()));
    for (std::size_t v : c.tail_channels)
        put_u32(buf, static_cast<std::uint32_t>(v));
    put_u32(buf, static_cast<std::uint32_t>(c.tail_kernel));
    put_f64(buf, c.width_scale);

    const auto params = model.named_params();
    const auto buffers = model.named_buffers();
    put_u32(buf, static_cast<std::uint32_t>(params.size() + buffers.size()));
    for (const auto& [name, t] : params)
        put_record(buf, name, t->shape, t->data);
    for (const auto& [name, vec] : buffers)
        put_record(buf, name, {vec->size()}, *vec);

    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    put_u32(buf, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("checkpoint: cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out)
        throw IoError("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("checkpoint: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();
    if (buf.size() < 10 || buf.compare(0, 4, "KNEE") != 0)
        throw FormatError("checkpoint: bad magic");

    const std::string body = buf.substr(0, buf.size() - 4);
    Reader tail_reader{buf, buf.size() - 4};
    const std::uint32_t stored_crc = tail_reader.u32();
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    if (crc != stored_crc)
        throw ChecksumError("checkpoint: CRC mismatch in " + path);

    Reader r{body, 4};
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion)
        throw VersionError("checkpoint: file version " + std::to_string(version) +
                           ", supported version " + std::to_string(kCheckpointVersion));

    ModelConfig c;
    c.input_channels = r.u32();
    c.length = r.u64();
    c.encoder_channels.resize(r.u32());
    for (auto& v : c.encoder_channels)
        v = r.u32();
    c.bottleneck_channels = r.u32();
    c.kernel = r.u32();
    c.tail_channels.resize(r.u32());
    for (auto& v : c.tail_channels)
        v = r.u32();
    c.tail_kernel = r.u32();
    c.width_scale = r.f64();

    Model m = build(c, 0);
    std::map<std::string, ag::TensorPtr> params;
    for (auto& [name, t] : m.named_params())
        params[name] = t;
    std::map<std::string, std::vector<double>*> buffers;
    for (auto& [name, vec] : m.named_buffers())
        buffers[name] = vec;

    const std::uint32_t n_records = r.u32();
    for (std::uint32_t i = 0; i < n_records; ++i) {
        const std::string name = r.str();
        std::vector<std::size_t> dims(r.u32());
        std::size_t n = 1;
        for (auto& d : dims) {
            d = r.u64();
            n *= d;
        }
        std::vector<double> values(n);
        for (auto& v : values)
            v = r.f64();
        if (auto it = params.find(name); it != params.end()) {
            if (it->second->shape != dims)
                throw FormatError("checkpoint: shape mismatch for " + name);
            it->second->data = std::move(values);
        } else if (auto bit = buffers.find(name); bit != buffers.end()) {
            if (bit->second->size() != n)
                throw FormatError("checkpoint: size mismatch for " + name);
            *bit->second = std::move(values);
        } else {
            throw FormatError("checkpoint: unknown record " + name);
        }
    }
    return m;
}

} // namespace kb
