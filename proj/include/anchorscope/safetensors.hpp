#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "linalg.hpp"

namespace anchorscope {

/// Reader for the safetensors container: little-endian u64 header length,
/// JSON header mapping tensor name to {dtype, shape, data_offsets}, then the
/// concatenated raw buffers. The whole file is held in memory and tensors are
/// exposed as Eigen maps over it, so a loaded file must outlive its maps.
class SafeTensors {
public:
    struct Entry {
        std::string dtype;
        std::vector<std::int64_t> shape;
        std::size_t begin = 0;
        std::size_t end = 0;
    };

    static SafeTensors load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) fail("cannot open safetensors file: " + path);
        std::uint64_t header_len = 0;
        char lenbuf[8];
        if (!f.read(lenbuf, 8)) fail("truncated safetensors header in " + path);
        std::memcpy(&header_len, lenbuf, 8);

        std::string header(header_len, '\0');
        if (!f.read(header.data(), static_cast<std::streamsize>(header_len)))
            fail("truncated safetensors header in " + path);

        SafeTensors st;
        st.path_ = path;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(header);
        } catch (const std::exception& e) {
            fail("bad safetensors header in " + path + ": " + e.what());
        }

        f.seekg(0, std::ios::end);
        const auto file_size = static_cast<std::size_t>(f.tellg());
        const std::size_t data_begin = 8 + header_len;
        st.data_.resize(file_size - data_begin);
        f.seekg(static_cast<std::streamoff>(data_begin));
        if (!f.read(reinterpret_cast<char*>(st.data_.data()),
                    static_cast<std::streamsize>(st.data_.size())))
            fail("truncated safetensors data in " + path);

        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "__metadata__") continue;
            Entry e;
            e.dtype = it.value().at("dtype").get<std::string>();
            for (const auto& d : it.value().at("shape")) e.shape.push_back(d.get<std::int64_t>());
            const auto& off = it.value().at("data_offsets");
            e.begin = off.at(0).get<std::size_t>();
            e.end = off.at(1).get<std::size_t>();
            if (e.end < e.begin || e.end > st.data_.size())
                fail("tensor \"" + it.key() + "\" offsets out of bounds in " + path);
            st.entries_.emplace(it.key(), std::move(e));
        }
        return st;
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, _] : entries_) out.push_back(k);
        return out;
    }

    const Entry& entry(const std::string& name) const {
        const auto it = entries_.find(name);
        if (it == entries_.end()) fail("missing tensor \"" + name + "\" in " + path_);
        return it->second;
    }

    /// 2-D float tensor as a row-major map.
    MatMap matrix(const std::string& name) const {
        const Entry& e = float_entry(name, 2);
        return MatMap(float_ptr(e), e.shape[0], e.shape[1]);
    }

    /// 1-D float tensor as a row-vector map.
    VecMap vector(const std::string& name) const {
        const Entry& e = float_entry(name, 1);
        return VecMap(float_ptr(e), e.shape[0]);
    }

    /// Any-rank float tensor flattened to a row vector.
    VecMap flat(const std::string& name) const {
        const auto it = entries_.find(name);
        if (it == entries_.end()) fail("missing tensor \"" + name + "\" in " + path_);
        const Entry& e = it->second;
        require_f32(name, e);
        return VecMap(float_ptr(e), static_cast<std::int64_t>((e.end - e.begin) / 4));
    }

private:
    std::string path_;
    std::vector<unsigned char> data_;
    std::unordered_map<std::string, Entry> entries_;

    void require_f32(const std::string& name, const Entry& e) const {
        if (e.dtype != "F32")
            fail("tensor \"" + name + "\" has dtype " + e.dtype + ", expected F32, in " + path_);
        std::int64_t numel = 1;
        for (auto d : e.shape) numel *= d;
        if (static_cast<std::size_t>(numel) * 4 != e.end - e.begin)
            fail("tensor \"" + name + "\" size mismatch in " + path_);
    }

    const Entry& float_entry(const std::string& name, std::size_t rank) const {
        const Entry& e = entry(name);
        require_f32(name, e);
        if (e.shape.size() != rank)
            fail("tensor \"" + name + "\" has rank " + std::to_string(e.shape.size()) +
                 ", expected " + std::to_string(rank) + ", in " + path_);
        return e;
    }

    const float* float_ptr(const Entry& e) const {
        return reinterpret_cast<const float*>(data_.data() + e.begin);
    }
};

/// Header-then-seek reader that copies tensors one at a time into caller
/// storage. Loading a checkpoint this way peaks at the final footprint
/// instead of holding the raw file alongside the parsed weights.
class SafeTensorsStream {
public:
    using Entry = SafeTensors::Entry;

    static SafeTensorsStream open(const std::string& path) {
        SafeTensorsStream st;
        st.path_ = path;
        st.file_.open(path, std::ios::binary);
        if (!st.file_) fail("cannot open safetensors file: " + path);
        std::uint64_t header_len = 0;
        char lenbuf[8];
        if (!st.file_.read(lenbuf, 8)) fail("truncated safetensors header in " + path);
        std::memcpy(&header_len, lenbuf, 8);
        std::string header(header_len, '\0');
        if (!st.file_.read(header.data(), static_cast<std::streamsize>(header_len)))
            fail("truncated safetensors header in " + path);
        st.data_begin_ = 8 + header_len;

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(header);
        } catch (const std::exception& e) {
            fail("bad safetensors header in " + path + ": " + e.what());
        }
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "__metadata__") continue;
            Entry e;
            e.dtype = it.value().at("dtype").get<std::string>();
            for (const auto& d : it.value().at("shape")) e.shape.push_back(d.get<std::int64_t>());
            const auto& off = it.value().at("data_offsets");
            e.begin = off.at(0).get<std::size_t>();
            e.end = off.at(1).get<std::size_t>();
            st.entries_.emplace(it.key(), std::move(e));
        }
        return st;
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    const Entry& entry(const std::string& name) const {
        const auto it = entries_.find(name);
        if (it == entries_.end()) fail("missing tensor \"" + name + "\" in " + path_);
        return it->second;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, _] : entries_) out.push_back(k);
        return out;
    }

    Mat read_matrix(const std::string& name) {
        const Entry& e = check(name, 2);
        Mat m(e.shape[0], e.shape[1]);
        read_bytes(e, m.data());
        return m;
    }

    Vec read_vector(const std::string& name) {
        const Entry& e = check(name, 1);
        Vec v(e.shape[0]);
        read_bytes(e, v.data());
        return v;
    }

private:
    std::string path_;
    mutable std::ifstream file_;
    std::size_t data_begin_ = 0;
    std::unordered_map<std::string, Entry> entries_;

    const Entry& check(const std::string& name, std::size_t rank) {
        const Entry& e = entry(name);
        if (e.dtype != "F32")
            fail("tensor \"" + name + "\" has dtype " + e.dtype + ", expected F32, in " + path_);
        if (e.shape.size() != rank)
            fail("tensor \"" + name + "\" has rank " + std::to_string(e.shape.size()) +
                 ", expected " + std::to_string(rank) + ", in " + path_);
        std::int64_t numel = 1;
        for (auto d : e.shape) numel *= d;
        if (static_cast<std::size_t>(numel) * 4 != e.end - e.begin)
            fail("tensor \"" + name + "\" size mismatch in " + path_);
        return e;
    }

    void read_bytes(const Entry& e, float* dst) {
        file_.seekg(static_cast<std::streamoff>(data_begin_ + e.begin));
        if (!file_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(e.end - e.begin)))
            fail("truncated tensor data in " + path_);
    }
};

/// Minimal F32-only writer, enough to round-trip synthetic checkpoints in
/// tests and to persist toy models from the CLI.
class SafeTensorsWriter {
public:
    void add(const std::string& name, const Mat& m) {
        add_raw(name, {m.rows(), m.cols()}, m.data(), static_cast<std::size_t>(m.size()));
    }

    void add(const std::string& name, const Vec& v) {
        add_raw(name, {v.size()}, v.data(), static_cast<std::size_t>(v.size()));
    }

    void add_shaped(const std::string& name, std::vector<std::int64_t> shape, const float* data,
                    std::size_t numel) {
        add_raw(name, std::move(shape), data, numel);
    }

    void write(const std::string& path) const {
        nlohmann::json header = nlohmann::json::object();
        std::size_t offset = 0;
        for (const auto& t : tensors_) {
            header[t.name] = {{"dtype", "F32"},
                              {"shape", t.shape},
                              {"data_offsets", {offset, offset + t.bytes.size()}}};
            offset += t.bytes.size();
        }
        const std::string hjson = header.dump();
        std::ofstream f(path, std::ios::binary);
        if (!f) fail("cannot write safetensors file: " + path);
        const std::uint64_t header_len = hjson.size();
        char lenbuf[8];
        std::memcpy(lenbuf, &header_len, 8);
        f.write(lenbuf, 8);
        f.write(hjson.data(), static_cast<std::streamsize>(hjson.size()));
        for (const auto& t : tensors_)
            f.write(reinterpret_cast<const char*>(t.bytes.data()),
                    static_cast<std::streamsize>(t.bytes.size()));
        if (!f) fail("short write to " + path);
    }

private:
    struct Pending {
        std::string name;
        std::vector<std::int64_t> shape;
        std::vector<unsigned char> bytes;
    };
    std::vector<Pending> tensors_;

    void add_raw(const std::string& name, std::vector<std::int64_t> shape, const float* data,
                 std::size_t numel) {
        Pending p;
        p.name = name;
        p.shape = std::move(shape);
        p.bytes.resize(numel * 4);
        std::memcpy(p.bytes.data(), data, p.bytes.size());
        tensors_.push_back(std::move(p));
    }
};

} // namespace anchorscope
