#include "mtfl/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>
#include <unistd.h>

#include "mtfl/errors.hpp"

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace mtfl {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void matrix(const Eigen::MatrixXd& M) {
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            for (Eigen::Index j = 0; j < M.cols(); ++j) f64(M(i, j));
    }
    void vector(const Eigen::VectorXd& v) {
        for (double x : v) f64(x);
    }
    std::string take() { return std::move(out_); }

private:
    void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }
    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd M(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = f64();
        return M;
    }
    Eigen::VectorXd vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void raw(void* p, std::size_t n) {
        if (pos_ + n > in_.size()) throw std::runtime_error("binary input truncated");
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string encode_netparams(const NetParams& p) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(p.W.cols()));
    w.u32(static_cast<std::uint32_t>(p.meta.r));
    w.u32(static_cast<std::uint32_t>(p.W.rows()));
    w.u32(static_cast<std::uint32_t>(p.heads.rows()));
    w.matrix(p.W);
    w.vector(p.b);
    w.matrix(p.heads);
    return w.take();
}

NetParams decode_netparams(std::string_view bytes) {
    Reader in(bytes);
    NetParams p;
    p.meta.d = static_cast<int>(in.u32());
    p.meta.r = static_cast<int>(in.u32());
    p.meta.m = static_cast<int>(in.u32());
    p.meta.T = static_cast<int>(in.u32());
    p.W = in.matrix(p.meta.m, p.meta.d);
    p.b = in.vector(p.meta.m);
    p.heads = in.matrix(p.meta.T, p.meta.m);
    if (!in.done()) throw std::runtime_error("trailing bytes after NetParams");
    return p;
}

void write_netparams(const std::filesystem::path& path, const NetParams& p) {
    write_file_atomic(path, encode_netparams(p));
}

NetParams read_netparams(const std::filesystem::path& path) { return decode_netparams(read_file(path)); }

void write_stack(const std::filesystem::path& stem, const EmbeddingStack& s) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(s.layer1_W.rows()));
    w.u32(static_cast<std::uint32_t>(s.layer1_W.cols()));
    w.u32(static_cast<std::uint32_t>(s.layer2_W.rows()));
    w.matrix(s.layer1_W);
    w.vector(s.layer1_b);
    w.matrix(s.layer2_W);
    w.vector(s.layer2_b);
    auto bin = stem;
    bin += ".bin";
    write_file_atomic(bin, w.take());

    nlohmann::ordered_json h;
    h["variant"] = s.variant == StackVariant::learned ? "learned" : "purified";
    h["scale"] = s.scale;
    h["gamma"] = s.gamma;
    h["gamma_hat"] = s.gamma_hat;
    h["shared_id"] = s.shared_id;
    auto js = stem;
    js += ".json";
    write_file_atomic(js, h.dump(2) + "\n");
}

EmbeddingStack read_stack(const std::filesystem::path& stem) {
    auto bin = stem;
    bin += ".bin";
    auto js = stem;
    js += ".json";
    const std::string bytes = read_file(bin);
    Reader in(bytes);
    EmbeddingStack s;
    const auto m_bar = static_cast<Eigen::Index>(in.u32());
    const auto d = static_cast<Eigen::Index>(in.u32());
    const auto m_hat = static_cast<Eigen::Index>(in.u32());
    s.layer1_W = in.matrix(m_bar, d);
    s.layer1_b = in.vector(m_bar);
    s.layer2_W = in.matrix(m_hat, m_bar);
    s.layer2_b = in.vector(m_hat);
    const auto h = nlohmann::json::parse(read_file(js));
    s.variant = h.at("variant").get<std::string>() == "learned" ? StackVariant::learned : StackVariant::purified;
    s.scale = h.at("scale").get<double>();
    s.gamma = h.at("gamma").get<double>();
    s.gamma_hat = h.at("gamma_hat").get<double>();
    s.shared_id = h.at("shared_id").get<std::uint64_t>();
    return s;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

}  // namespace mtfl
