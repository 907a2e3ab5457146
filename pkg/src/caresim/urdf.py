"""URDF-subset reader and writer.

Two callers share this format:
    - robot descriptions: links with mass/inertia/collision primitives and
      revolute|prismatic|fixed joints with limits and damping
    - avatar range-of-motion files: one revolute joint per anatomical axis,
      named "<joint>_x|_y|_z"; only joint, limit, origin, parent, child are
      honored there

Anything outside the subset is ignored on read.
"""

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np


class UrdfError(Exception):
    pass


@dataclass
class UrdfGeometry:
    kind: str  # box | sphere | capsule
    size: tuple  # box: (hx, hy, hz) full extents; sphere: (r,); capsule: (r, length)


@dataclass
class UrdfLink:
    name: str
    mass: float = 0.0
    inertia: np.ndarray = field(default_factory=lambda: np.zeros(3))  # ixx, iyy, izz
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    collision: UrdfGeometry | None = None
    collision_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class UrdfJoint:
    name: str
    kind: str  # revolute | prismatic | fixed
    parent: str
    child: str
    origin_xyz: np.ndarray = field(default_factory=lambda: np.zeros(3))
    origin_rpy: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    lower: float = 0.0
    upper: float = 0.0
    damping: float = 0.0


@dataclass
class UrdfModel:
    name: str
    links: dict
    joints: list

    def joint_limits(self):
        """name -> (lower, upper) for all non-fixed joints."""
        return {j.name: (j.lower, j.upper) for j in self.joints if j.kind != "fixed"}


def _floats(text, n):
    vals = [float(t) for t in text.split()]
    if len(vals) != n:
        raise UrdfError(f"expected {n} values, got {text!r}")
    return np.array(vals)


def _parse_geometry(geom_el):
    box = geom_el.find("box")
    if box is not None:
        return UrdfGeometry("box", tuple(_floats(box.get("size"), 3)))
    sphere = geom_el.find("sphere")
    if sphere is not None:
        return UrdfGeometry("sphere", (float(sphere.get("radius")),))
    capsule = geom_el.find("capsule")
    if capsule is not None:
        return UrdfGeometry(
            "capsule", (float(capsule.get("radius")), float(capsule.get("length")))
        )
    cyl = geom_el.find("cylinder")
    if cyl is not None:  # treated as a capsule of the same radius/length
        return UrdfGeometry("capsule", (float(cyl.get("radius")), float(cyl.get("length"))))
    return None


def parse_urdf(path):
    try:
        tree = ET.parse(path)
    except (ET.ParseError, OSError) as exc:
        raise UrdfError(f"cannot parse {path}: {exc}") from exc
    root = tree.getroot()
    if root.tag != "robot":
        raise UrdfError(f"{path}: root element is <{root.tag}>, expected <robot>")

    links = {}
    for link_el in root.findall("link"):
        link = UrdfLink(name=link_el.get("name"))
        inertial = link_el.find("inertial")
        if inertial is not None:
            mass_el = inertial.find("mass")
            if mass_el is not None:
                link.mass = float(mass_el.get("value"))
            origin_el = inertial.find("origin")
            if origin_el is not None and origin_el.get("xyz"):
                link.com = _floats(origin_el.get("xyz"), 3)
            inertia_el = inertial.find("inertia")
            if inertia_el is not None:
                link.inertia = np.array(
                    [
                        float(inertia_el.get("ixx", 0.0)),
                        float(inertia_el.get("iyy", 0.0)),
                        float(inertia_el.get("izz", 0.0)),
                    ]
                )
        coll = link_el.find("collision")
        if coll is not None:
            geom_el = coll.find("geometry")
            if geom_el is not None:
                link.collision = _parse_geometry(geom_el)
            origin_el = coll.find("origin")
            if origin_el is not None and origin_el.get("xyz"):
                link.collision_origin = _floats(origin_el.get("xyz"), 3)
        links[link.name] = link

    joints = []
    for joint_el in root.findall("joint"):
        kind = joint_el.get("type")
        if kind == "continuous":
            kind = "revolute"
        if kind not in ("revolute", "prismatic", "fixed"):
            continue
        parent_el = joint_el.find("parent")
        child_el = joint_el.find("child")
        if parent_el is None or child_el is None:
            raise UrdfError(f"joint {joint_el.get('name')!r} lacks parent/child")
        j = UrdfJoint(
            name=joint_el.get("name"),
            kind=kind,
            parent=parent_el.get("link"),
            child=child_el.get("link"),
        )
        origin_el = joint_el.find("origin")
        if origin_el is not None:
            if origin_el.get("xyz"):
                j.origin_xyz = _floats(origin_el.get("xyz"), 3)
            if origin_el.get("rpy"):
                j.origin_rpy = _floats(origin_el.get("rpy"), 3)
        axis_el = joint_el.find("axis")
        if axis_el is not None and axis_el.get("xyz"):
            j.axis = _floats(axis_el.get("xyz"), 3)
        limit_el = joint_el.find("limit")
        if limit_el is not None:
            j.lower = float(limit_el.get("lower", 0.0))
            j.upper = float(limit_el.get("upper", 0.0))
        dyn_el = joint_el.find("dynamics")
        if dyn_el is not None and dyn_el.get("damping"):
            j.damping = float(dyn_el.get("damping"))
        joints.append(j)

    return UrdfModel(name=root.get("name", ""), links=links, joints=joints)


def read_axis_limits(path):
    """Read an avatar range-of-motion file.

    Joints are revolute triples named "<joint>_x|_y|_z"; returns
    {joint_name: 3x2 array [[lo, hi] per axis]}.
    """
    model = parse_urdf(path)
    table = {}
    for j in model.joints:
        if j.kind != "revolute" or len(j.name) < 3 or j.name[-2] != "_":
            continue
        axis_ch = j.name[-1]
        if axis_ch not in "xyz":
            continue
        base = j.name[:-2]
        row = table.setdefault(base, np.zeros((3, 2)))
        row["xyz".index(axis_ch)] = (j.lower, j.upper)
    return table


def write_axis_limits(path, model_name, limits, chain):
    """Write a range-of-motion file as revolute XYZ triples.

    limits: {joint_name: (3, 2) array}; chain: {joint_name: parent_name} used
    to emit parent/child links so the file is a loadable kinematic tree.
    """
    lines = [f'<robot name="{model_name}">']
    names = list(limits)
    lines.append('  <link name="root"/>')
    for name in names:
        lines.append(f'  <link name="{name}_link"/>')
    for name in names:
        parent = chain.get(name)
        parent_link = f"{parent}_link" if parent in limits else "root"
        arr = np.asarray(limits[name])
        for k, axis_ch in enumerate("xyz"):
            lo, hi = arr[k]
            # intermediate bodies for the x/y axes of the triple
            child_link = f"{name}_link" if axis_ch == "z" else f"{name}_{axis_ch}_body"
            if axis_ch != "z":
                lines.append(f'  <link name="{child_link}"/>')
            src = parent_link if axis_ch == "x" else f"{name}_{'x' if axis_ch == 'y' else 'y'}_body"
            axis_vec = {"x": "1 0 0", "y": "0 1 0", "z": "0 0 1"}[axis_ch]
            lines.append(f'  <joint name="{name}_{axis_ch}" type="revolute">')
            lines.append(f'    <parent link="{src}"/>')
            lines.append(f'    <child link="{child_link}"/>')
            lines.append('    <origin xyz="0 0 0" rpy="0 0 0"/>')
            lines.append(f'    <axis xyz="{axis_vec}"/>')
            lines.append(f'    <limit lower="{float(lo)!r}" upper="{float(hi)!r}"/>')
            lines.append("  </joint>")
    lines.append("</robot>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
