#include "sihd/checkpoint.hpp"

#include <bit>
#include <cstring>

namespace sihd {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'I', 'H', 'D', 'C', 'K', 'P', 'T'};

class Writer {
public:
    void u64(std::uint64_t v) { out_.append(reinterpret_cast<const char*>(&v), sizeof v); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void vec(const Vec& v) {
        for (double x : v) f64(x);
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string& str() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& s) : s_(s) {}
    std::uint64_t u64() {
        if (pos_ + 8 > s_.size()) throw ValidationError("checkpoint truncated");
        std::uint64_t v;
        std::memcpy(&v, s_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Vec vec(std::uint64_t n) {
        if (n > (s_.size() - pos_) / 8) throw ValidationError("checkpoint truncated");
        Vec v(n);
        for (double& x : v) x = f64();
        return v;
    }
    std::size_t size_value(std::uint64_t limit = 1u << 24) {
        const auto v = u64();
        if (v > limit) throw ValidationError("checkpoint field out of range");
        return static_cast<std::size_t>(v);
    }
    std::size_t pos() const { return pos_; }

private:
    const std::string& s_;
    std::size_t pos_ = 8;
};

}  // namespace

std::string checkpoint_bytes(const DiffusionStack& stack) {
    Writer w;
    w.raw(kMagic, 8);
    w.u64(kCheckpointVersion);
    w.u64(stack.config_hash);
    w.u64(stack.schedule.kind == ScheduleKind::linear ? 0 : 1);
    w.u64(stack.schedule.steps());
    w.vec(stack.schedule.beta);
    w.f64(stack.omega);
    w.u64(stack.guidance_mode == GuidanceMode::embedding ? 0 : 1);
    w.f64(stack.reg_eta);
    w.u64(stack.state_dim);
    w.u64(stack.action_dim);
    w.f64(stack.r_max);
    w.u64(stack.layers.size());
    for (const auto& l : stack.layers) {
        const auto& s = l.model.shape();
        w.u64(l.layer);
        w.u64(s.seq_len);
        w.u64(s.elem_dim);
        w.u64(s.cond_dim);
        w.u64(s.step_dim);
        w.u64(s.hidden);
        w.u64(l.model.params.size());
        w.vec(l.model.params);
        w.vec(l.ema);
        w.vec(l.normalizer.lo);
        w.vec(l.normalizer.hi);
    }
    const std::uint64_t sum = fnv1a(w.str());
    w.u64(sum);
    return std::move(w.str());
}

DiffusionStack parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw ValidationError("not a model checkpoint");
    {
        std::uint64_t stored;
        std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
        if (stored != fnv1a(std::string_view(bytes).substr(0, bytes.size() - 8))) {
            throw ValidationError("checkpoint checksum mismatch");
        }
    }
    Reader r(bytes);
    const auto version = r.u64();
    if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    DiffusionStack st;
    st.config_hash = r.u64();
    const auto kind = r.u64() == 0 ? ScheduleKind::linear : ScheduleKind::cosine;
    const auto K = r.size_value();
    st.schedule = make_schedule(kind, K);
    st.schedule.beta = r.vec(K);
    double prod = 1.0;
    for (std::size_t i = 0; i < K; ++i) {
        prod *= 1.0 - st.schedule.beta[i];
        st.schedule.alpha_bar[i] = prod;
    }
    st.omega = r.f64();
    st.guidance_mode = r.u64() == 0 ? GuidanceMode::embedding : GuidanceMode::output;
    st.reg_eta = r.f64();
    st.state_dim = r.size_value();
    st.action_dim = r.size_value();
    st.r_max = r.f64();
    const auto n_layers = r.size_value(64);
    for (std::size_t i = 0; i < n_layers; ++i) {
        LayerModel l;
        l.layer = r.size_value();
        DenoiserShape s;
        s.seq_len = r.size_value();
        s.elem_dim = r.size_value();
        s.cond_dim = r.size_value();
        s.step_dim = r.size_value();
        s.hidden = r.size_value();
        l.model = Denoiser(s);
        const auto P = r.size_value(std::uint64_t{1} << 32);
        if (P != l.model.parameter_count()) throw ValidationError("checkpoint parameter count does not match its shape");
        l.model.params = r.vec(P);
        l.ema = r.vec(P);
        l.normalizer.lo = r.vec(s.elem_dim);
        l.normalizer.hi = r.vec(s.elem_dim);
        st.layers.push_back(std::move(l));
    }
    if (r.pos() + 8 != bytes.size()) throw ValidationError("checkpoint has trailing bytes");
    return st;
}

void save_checkpoint(const DiffusionStack& stack, const std::string& path) { write_file(path, checkpoint_bytes(stack)); }

DiffusionStack load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

}  // namespace sihd
