"""
メッシュと自由度番号付けのテスト
"""

from fractions import Fraction

import numpy as np
import pytest

from src.mesh import (
    BoxMesh,
    MeshError,
    build_dof_map,
    element_box,
    format_mesh,
    global_dofs,
    graded_mesh,
    parse_mesh,
    read_mesh_file,
    uniform_mesh,
    unit_domain,
    write_mesh_file,
)


@pytest.fixture
def mesh2():
    return uniform_mesh(unit_domain(2), (4, 4))


class TestUniformMesh:
    """等間隔メッシュ"""

    def test_counts(self, mesh2):
        assert mesh2.dim == 2
        assert mesh2.counts == (4, 4)
        assert mesh2.n_elements == 16
        assert mesh2.n_vertices == 25
        assert mesh2.n_interior_vertices == 9

    def test_mesh_size(self, mesh2):
        assert mesh2.mesh_size == pytest.approx(np.sqrt(2) / 4)
        assert mesh2.shape_regularity == pytest.approx(1.0)

    def test_anisotropic_counts(self):
        mesh = uniform_mesh([(0, 2), (0, 1)], (2, 4))
        assert mesh.counts == (2, 4)
        assert mesh.shape_regularity == pytest.approx(4.0)

    def test_element_geometry(self, mesh2):
        centers, halves = mesh2.element_geometry()
        assert centers.shape == (16, 2)
        np.testing.assert_allclose(centers[1], [0.125, 0.375])
        np.testing.assert_allclose(halves, 0.125)

    def test_element_box(self, mesh2):
        box = element_box(mesh2, (1, 2))
        assert box.lower == (Fraction(1, 4), Fraction(1, 2))
        assert box.upper == (Fraction(1, 2), Fraction(3, 4))

    def test_element_out_of_range(self, mesh2):
        with pytest.raises(MeshError):
            element_box(mesh2, (4, 0))

    @pytest.mark.parametrize("domain,counts", [
        ([(0, 0)], (2,)),
        ([(0, 1)], (0,)),
        ([(0, 1), (0, 1)], (2,)),
        ([], ()),
    ])
    def test_invalid_definitions(self, domain, counts):
        with pytest.raises(MeshError):
            uniform_mesh(domain, counts)

    def test_non_monotone_breakpoints(self):
        with pytest.raises(MeshError):
            BoxMesh(((0, Fraction(1, 2), Fraction(1, 2), 1),))

    def test_boundary_vertex(self, mesh2):
        assert mesh2.is_boundary_vertex((0, 2))
        assert mesh2.is_boundary_vertex((4, 1))
        assert not mesh2.is_boundary_vertex((2, 2))


class TestGradedMesh:
    """非合同メッシュ"""

    def test_deterministic(self):
        a = graded_mesh(unit_domain(2), (8, 8), seed=3, jitter=0.3)
        b = graded_mesh(unit_domain(2), (8, 8), seed=3, jitter=0.3)
        c = graded_mesh(unit_domain(2), (8, 8), seed=4, jitter=0.3)
        assert a == b
        assert a != c

    def test_jitter_bound(self):
        mesh = graded_mesh(unit_domain(1), (10,), seed=0, jitter=0.4)
        points = mesh.breakpoints[0]
        assert points[0] == 0 and points[-1] == 1
        for k, p in enumerate(points):
            assert abs(p - Fraction(k, 10)) <= Fraction(4, 100)

    def test_zero_jitter_is_uniform(self):
        assert graded_mesh(unit_domain(2), (3, 3), seed=1, jitter=0) == uniform_mesh(unit_domain(2), (3, 3))

    def test_rejects_large_jitter(self):
        with pytest.raises(MeshError):
            graded_mesh(unit_domain(2), (3, 3), seed=1, jitter=0.5)


class TestDofMap:
    """自由度の番号付けと境界固定"""

    @pytest.mark.parametrize("d,N,free", [(1, 4, 6), (2, 4, 27), (3, 2, 4), (2, 1, 0)])
    def test_free_count(self, d, N, free):
        dofs = build_dof_map(uniform_mesh(unit_domain(d), (N,) * d))
        assert dofs.n_free == free
        assert dofs.total_dofs == (d + 1) * (N + 1) ** d

    def test_global_dofs_first_element(self):
        mesh = uniform_mesh(unit_domain(2), (2, 2))
        assert global_dofs(mesh, (0, 0)) == [0, 1, 2, 3, 4, 5, 9, 10, 11, 12, 13, 14]

    def test_table_matches_global_dofs(self, mesh2):
        dofs = build_dof_map(mesh2)
        for n, elem in enumerate(mesh2.element_indices()):
            assert list(dofs.element_dofs[n]) == global_dofs(mesh2, elem)

    def test_boundary_dofs_are_fixed(self, mesh2):
        dofs = build_dof_map(mesh2)
        # 頂点 (0,0) の3自由度はすべて固定、内部頂点 (1,1) は非固定
        assert np.all(dofs.free_index[0:3] == -1)
        interior = np.ravel_multi_index((1, 1), mesh2.vertex_shape) * 3
        assert np.all(dofs.free_index[interior:interior + 3] >= 0)
        assert dofs.element_free_dofs.shape == (16, 12)


class TestMeshFile:
    """テキスト形式"""

    def test_write_and_read(self, tmp_path):
        mesh = graded_mesh(unit_domain(2), (4, 3), seed=2, jitter=0.2)
        path = tmp_path / "out" / "mesh.txt"
        write_mesh_file(mesh, path)
        assert read_mesh_file(path) == mesh

    def test_format(self):
        mesh = uniform_mesh(unit_domain(1), (2,))
        assert format_mesh(mesh) == "dim 1\n0 1/2 1\n"

    def test_comments_are_ignored(self):
        mesh = parse_mesh("# コメント\ndim 2\n0 1\n0 1/3 1\n")
        assert mesh.counts == (1, 2)

    @pytest.mark.parametrize("text", [
        "",
        "size 2\n0 1\n0 1\n",
        "dim 2\n0 1\n",
        "dim 1\n0 x\n",
        "dim 1\n0 1/0\n",
        "dim 1\n1 0\n",
    ])
    def test_malformed(self, text):
        with pytest.raises(MeshError):
            parse_mesh(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MeshError):
            read_mesh_file(tmp_path / "none.txt")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
