#include "svd/container.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "svd/errors.hpp"

namespace svd {

namespace {

void append(std::vector<char>& buf, const void* p, size_t n) {
    const char* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + n);
}

template <typename T>
void append_value(std::vector<char>& buf, T v) {
    append(buf, &v, sizeof(T));
}

uint32_t payload_crc(const std::vector<char>& payload) {
    return uint32_t(
        crc32(0, reinterpret_cast<const Bytef*>(payload.data()), uInt(payload.size())));
}

} // namespace

void write_container(const SparseTensor3D& tensor, const std::string& path) {
    std::vector<char> payload;
    const auto& s = tensor.shape();
    append_value<uint32_t>(payload, kContainerVersion);
    for (int32_t dim : {s.b, s.t, s.h, s.w}) append_value<uint32_t>(payload, uint32_t(dim));
    append_value<uint32_t>(payload, uint32_t(tensor.channels()));
    append_value<uint64_t>(payload, uint64_t(tensor.size()));
    for (const auto& c : tensor.coords()) {
        append_value<int32_t>(payload, c.batch);
        append_value<int32_t>(payload, c.t);
        append_value<int32_t>(payload, c.y);
        append_value<int32_t>(payload, c.x);
    }
    append(payload, tensor.features().data(), tensor.features().size() * sizeof(float));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write container: " + path);
    out.write("SVX1", 4);
    out.write(payload.data(), std::streamsize(payload.size()));
    const uint32_t crc = payload_crc(payload);
    out.write(reinterpret_cast<const char*>(&crc), 4);
    if (!out) throw ParseError("write failure on container: " + path);
}

SparseTensor3D read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open container: " + path);
    std::vector<char> data((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    if (data.size() < 4 || std::memcmp(data.data(), "SVX1", 4) != 0)
        throw FormatError(FormatError::Kind::BadMagic, "bad container magic in " + path);
    if (data.size() < 4 + 4 + 16 + 4 + 8 + 4)
        throw FormatError(FormatError::Kind::Truncated, "container header truncated in " + path);

    const std::vector<char> payload(data.begin() + 4, data.end() - 4);
    uint32_t stored_crc;
    std::memcpy(&stored_crc, data.data() + data.size() - 4, 4);
    if (stored_crc != payload_crc(payload))
        throw FormatError(FormatError::Kind::ChecksumMismatch,
                          "container checksum mismatch in " + path);

    size_t pos = 0;
    auto read_value = [&](auto& v) {
        if (pos + sizeof(v) > payload.size())
            throw FormatError(FormatError::Kind::Truncated, "container truncated in " + path);
        std::memcpy(&v, payload.data() + pos, sizeof(v));
        pos += sizeof(v);
    };

    uint32_t version;
    read_value(version);
    if (version != kContainerVersion)
        throw FormatError(FormatError::Kind::VersionMismatch,
                          "unsupported container version " + std::to_string(version));
    uint32_t b, t, h, w, c;
    uint64_t m;
    read_value(b);
    read_value(t);
    read_value(h);
    read_value(w);
    read_value(c);
    read_value(m);

    const size_t need = size_t(m) * (16 + size_t(c) * 4);
    if (payload.size() - pos != need)
        throw FormatError(FormatError::Kind::Truncated,
                          "container payload size mismatch in " + path);

    std::vector<VoxelCoord> coords(static_cast<size_t>(m));
    for (auto& vc : coords) {
        read_value(vc.batch);
        read_value(vc.t);
        read_value(vc.y);
        read_value(vc.x);
    }
    std::vector<float> feats(size_t(m) * c);
    if (!feats.empty()) {
        std::memcpy(feats.data(), payload.data() + pos, feats.size() * 4);
    }
    return SparseTensor3D({int32_t(b), int32_t(t), int32_t(h), int32_t(w)}, int(c),
                          std::move(coords), std::move(feats));
}

} // namespace svd
