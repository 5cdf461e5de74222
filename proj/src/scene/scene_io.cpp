#include "csplat/scene/scene_io.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace csplat {

namespace {

constexpr int kRestCount = (kShCoeffCount - 1) * 3;  // 45

std::vector<std::string> cloud_property_names() {
    std::vector<std::string> names = {"x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                                      "scale_0", "scale_1", "scale_2", "opacity",
                                      "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int i = 0; i < kRestCount; ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("gamma");
    return names;
}

// Flatten one gaussian into the writer's property order.
void pack_row(const Gaussian& g, std::vector<float>& row) {
    row.clear();
    row.push_back(static_cast<float>(g.position.x));
    row.push_back(static_cast<float>(g.position.y));
    row.push_back(static_cast<float>(g.position.z));
    for (int i = 0; i < 4; ++i) row.push_back(static_cast<float>(g.rotation[i]));
    for (int i = 0; i < 3; ++i) row.push_back(static_cast<float>(g.log_scale[i]));
    row.push_back(static_cast<float>(g.opacity_logit));
    for (int c = 0; c < 3; ++c) row.push_back(static_cast<float>(g.sh[c]));
    for (int c = 0; c < 3; ++c)
        for (int k = 1; k < kShCoeffCount; ++k)
            row.push_back(static_cast<float>(g.sh[k * 3 + c]));
    row.push_back(static_cast<float>(g.gamma));
}

}  // namespace

void save_cloud_ply(const GaussianCloud& cloud, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    const auto names = cloud_property_names();
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << cloud.size() << "\n";
    for (const auto& n : names) out << "property float " << n << "\n";
    out << "end_header\n";
    std::vector<float> row;
    for (const auto& g : cloud.gaussians) {
        pack_row(g, row);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

GaussianCloud load_cloud_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line) || line != "ply") throw std::runtime_error(path + ": not a PLY");
    std::size_t vertex_count = 0;
    std::vector<std::string> props;
    bool binary_le = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (tok == "element") {
            std::string name;
            ls >> name >> vertex_count;
            if (name != "vertex") throw std::runtime_error(path + ": unexpected element " + name);
        } else if (tok == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "float")
                throw std::runtime_error(path + ": unsupported property type " + type);
            props.push_back(name);
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!binary_le) throw std::runtime_error(path + ": binary_little_endian required");

    std::map<std::string, int> offset;
    for (std::size_t i = 0; i < props.size(); ++i) offset[props[i]] = static_cast<int>(i);
    auto need = [&](const std::string& n) {
        auto it = offset.find(n);
        if (it == offset.end()) throw std::runtime_error(path + ": missing property " + n);
        return it->second;
    };

    const int ix = need("x"), iy = need("y"), iz = need("z");
    int irot[4], iscale[3], idc[3];
    for (int i = 0; i < 4; ++i) irot[i] = need("rot_" + std::to_string(i));
    for (int i = 0; i < 3; ++i) iscale[i] = need("scale_" + std::to_string(i));
    for (int i = 0; i < 3; ++i) idc[i] = need("f_dc_" + std::to_string(i));
    const int iop = need("opacity");
    std::vector<int> irest(kRestCount, -1);
    for (int i = 0; i < kRestCount; ++i) {
        auto it = offset.find("f_rest_" + std::to_string(i));
        if (it != offset.end()) irest[static_cast<std::size_t>(i)] = it->second;
    }
    const auto igamma_it = offset.find("gamma");
    const int igamma = igamma_it == offset.end() ? -1 : igamma_it->second;

    GaussianCloud cloud;
    cloud.gaussians.resize(vertex_count);
    std::vector<float> row(props.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw std::runtime_error(path + ": truncated vertex data");
        Gaussian& g = cloud.gaussians[v];
        g.position = {row[ix], row[iy], row[iz]};
        // float32 rounding keeps unit quaternions unit to ~1e-7; not
        // renormalizing keeps save/load byte-stable
        g.rotation = Quat{row[irot[0]], row[irot[1]], row[irot[2]], row[irot[3]]};
        g.log_scale = {row[iscale[0]], row[iscale[1]], row[iscale[2]]};
        g.opacity_logit = row[iop];
        for (int c = 0; c < 3; ++c) g.sh[c] = row[idc[c]];
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < kShCoeffCount; ++k) {
                const int r = irest[static_cast<std::size_t>(c * (kShCoeffCount - 1) + k - 1)];
                g.sh[k * 3 + c] = r >= 0 ? row[r] : 0.0;
            }
        g.gamma = igamma >= 0 ? row[igamma] : 0.0;
    }
    cloud.reset_stats();
    cloud.active_sh_degree = kMaxShDegree;
    return cloud;
}

std::string Scene::image_path(const Camera& cam) const {
    if (!cam.image_path.empty() && cam.image_path.front() == '/') return cam.image_path;
    if (base_dir.empty()) return cam.image_path;
    return base_dir + "/" + cam.image_path;
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    nlohmann::json doc;
    in >> doc;
    Scene scene;
    const auto slash = path.rfind('/');
    scene.base_dir = slash == std::string::npos ? "." : path.substr(0, slash);
    for (const auto& jc : doc.at("cameras")) {
        Camera cam;
        cam.fx = jc.at("fx").get<double>();
        cam.fy = jc.at("fy").get<double>();
        cam.cx = jc.at("cx").get<double>();
        cam.cy = jc.at("cy").get<double>();
        cam.width = jc.at("width").get<int>();
        cam.height = jc.at("height").get<int>();
        const auto r = jc.at("R");
        if (r.size() != 9) throw std::runtime_error(path + ": R must be 9 floats row-major");
        for (int i = 0; i < 9; ++i) cam.rotation.m[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)].get<double>();
        const auto t = jc.at("t");
        if (t.size() != 3) throw std::runtime_error(path + ": t must be 3 floats");
        cam.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
        cam.image_id = jc.at("image_id").get<int>();
        cam.image_path = jc.value("image_path", "");
        if (cam.fx <= 0 || cam.fy <= 0) throw std::runtime_error(path + ": fx, fy must be positive");
        scene.cameras.push_back(cam);
    }
    return scene;
}

void save_scene(const Scene& scene, const std::string& path) {
    nlohmann::json doc;
    doc["cameras"] = nlohmann::json::array();
    for (const auto& cam : scene.cameras) {
        nlohmann::json jc;
        jc["fx"] = cam.fx;
        jc["fy"] = cam.fy;
        jc["cx"] = cam.cx;
        jc["cy"] = cam.cy;
        jc["width"] = cam.width;
        jc["height"] = cam.height;
        jc["R"] = std::vector<double>(cam.rotation.m.begin(), cam.rotation.m.end());
        jc["t"] = std::vector<double>{cam.translation.x, cam.translation.y, cam.translation.z};
        jc["image_id"] = cam.image_id;
        jc["image_path"] = cam.image_path;
        doc["cameras"].push_back(jc);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    out << doc.dump(2) << "\n";
}

}  // namespace csplat
