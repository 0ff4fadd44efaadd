import numpy as np
import pytest

from logloom import clustering as cl
from logloom.eigen import jacobi_eigh
from logloom.errors import ContractViolation, DegenerateEmbedding, EigenFailure


def two_blobs(n_per=30, separation=10.0, seed=0, dim=2):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, size=(n_per, dim))
    b = rng.normal(separation, 1.0, size=(n_per, dim))
    points = np.vstack([a, b])
    truth = np.array([0] * n_per + [1] * n_per)
    return points, truth


class TestSimilarity:
    def test_identical_pair_gets_similarity_one(self):
        pts = np.array([[1.0, 2.0], [1.0, 2.0], [5.0, 5.0]])
        S = cl.similarity(pts, cl.SpectralConfig(knn=2, sigma=1.0))
        assert S[0, 1] == pytest.approx(1.0)
        assert np.all(np.diag(S) == 0)

    def test_closed_form_at_sigma_sqrt2(self):
        sigma = 0.7
        pts = np.array([[0.0, 0.0], [sigma * np.sqrt(2.0), 0.0], [9.0, 9.0]])
        S = cl.similarity(pts, cl.SpectralConfig(knn=2, sigma=sigma))
        assert S[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_matches_bruteforce_kernel_knn_oracle(self):
        pts, _ = two_blobs(n_per=10, separation=6.0, seed=3)
        cfg = cl.SpectralConfig(knn=4, sigma=1.3)
        S = cl.similarity(pts, cfg)

        m = pts.shape[0]
        dist2 = np.array(
            [[np.sum((pts[i] - pts[j]) ** 2) for j in range(m)] for i in range(m)]
        )
        kernel = np.exp(-dist2 / (2 * 1.3**2))
        keep = np.zeros((m, m), dtype=bool)
        for i in range(m):
            order = sorted(range(m), key=lambda j: (dist2[i, j], j))
            nn = [j for j in order if j != i][:4]
            keep[i, nn] = True
        keep = keep | keep.T
        expected = np.where(keep, kernel, 0.0)
        np.fill_diagonal(expected, 0.0)
        np.testing.assert_array_equal(S, expected)

    def test_all_identical_rows_degenerate(self):
        pts = np.ones((5, 3))
        with pytest.raises(DegenerateEmbedding):
            cl.similarity(pts, cl.SpectralConfig())

    def test_symmetric(self):
        pts, _ = two_blobs(n_per=15, seed=9)
        S = cl.similarity(pts, cl.SpectralConfig())
        assert (S == S.T).all()


class TestLaplacian:
    def test_zero_similarity_gives_identity(self):
        np.testing.assert_array_equal(cl.laplacian(np.zeros((3, 3))), np.eye(3))

    def test_two_point_hand_case(self):
        S = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(cl.laplacian(S), [[1.0, -1.0], [-1.0, 1.0]])

    def test_eigenvalues_within_zero_two(self):
        pts, _ = two_blobs(n_per=12, seed=4)
        L = cl.laplacian(cl.similarity(pts, cl.SpectralConfig(knn=5)))
        vals, _ = jacobi_eigh(L)
        assert vals.min() >= -1e-10
        assert vals.max() <= 2.0 + 1e-10


class TestSmallestEigenvectors:
    def test_identity_eigenvalues(self):
        vals, _ = jacobi_eigh(np.eye(4))
        np.testing.assert_allclose(vals, np.ones(4))

    def test_p3_spectrum_matches_cubic_roots(self):
        # Unnormalized Laplacian of the path P3; characteristic polynomial
        # x(x-1)(x-3) has roots {0, 1, 3}.
        L = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        vals, _ = jacobi_eigh(L)
        np.testing.assert_allclose(vals, [0.0, 1.0, 3.0], atol=1e-10)

    def test_reconstruction_identity(self):
        rng = np.random.default_rng(5)
        B = rng.standard_normal((12, 12))
        M = (B + B.T) / 2
        vals, Q = jacobi_eigh(M)
        np.testing.assert_allclose(Q @ np.diag(vals) @ Q.T, M, atol=1e-8)

    def test_rows_unit_normalized(self):
        pts, _ = two_blobs(n_per=10, seed=6)
        L = cl.laplacian(cl.similarity(pts, cl.SpectralConfig(knn=4)))
        u = cl.smallest_eigenvectors(L, 2)
        norms = np.linalg.norm(u, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-10)

    def test_asymmetric_rejected(self):
        with pytest.raises(ContractViolation):
            jacobi_eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_sweep_budget_failure(self):
        rng = np.random.default_rng(1)
        B = rng.standard_normal((20, 20))
        M = (B + B.T) / 2
        with pytest.raises(EigenFailure):
            jacobi_eigh(M, max_sweeps=1)


class TestKMeans:
    def test_separable_split(self):
        pts = np.array([[0.0, 0.0]] * 5 + [[10.0, 10.0]] * 5)
        result = cl.kmeans(pts, cl.SpectralConfig(seed=1))
        labels = result.labels
        assert len(set(labels[:5])) == 1
        assert len(set(labels[5:])) == 1
        assert labels[0] != labels[-1]
        assert result.sse == pytest.approx(0.0, abs=1e-18)

    def test_identical_points_deterministic(self):
        pts = np.ones((6, 2))
        a = cl.kmeans(pts, cl.SpectralConfig(seed=3)).labels
        b = cl.kmeans(pts, cl.SpectralConfig(seed=3)).labels
        np.testing.assert_array_equal(a, b)

    def test_matches_exhaustive_restart_oracle(self):
        pts, _ = two_blobs(n_per=25, separation=7.0, seed=8)
        ours = cl.kmeans(pts, cl.SpectralConfig(seed=0, kmeans_restarts=10))

        # Oracle: plain Lloyd from 1000 random index-pair seedings.
        rng = np.random.default_rng(999)
        best_sse, best_labels = np.inf, None
        for _ in range(1000):
            idx = rng.choice(50, size=2, replace=False)
            cents = pts[idx].copy()
            for _ in range(100):
                d2 = ((pts[:, None, :] - cents[None]) ** 2).sum(-1)
                lab = d2.argmin(1)
                new = np.array(
                    [
                        pts[lab == c].mean(0) if (lab == c).any() else cents[c]
                        for c in range(2)
                    ]
                )
                if np.allclose(new, cents):
                    break
                cents = new
            d2 = ((pts[:, None, :] - cents[None]) ** 2).sum(-1)
            lab = d2.argmin(1)
            sse = float(d2[np.arange(50), lab].sum())
            if sse < best_sse:
                best_sse, best_labels = sse, lab

        assert ours.sse == pytest.approx(best_sse, rel=1e-9)
        agree = (ours.labels == best_labels).mean()
        assert agree in (0.0, 1.0)  # identical partition up to label swap

    def test_sse_never_increases(self):
        pts, _ = two_blobs(n_per=20, separation=3.0, seed=12)
        result = cl.kmeans(pts, cl.SpectralConfig(seed=4))
        diffs = np.diff(result.sse_history)
        assert np.all(diffs <= 1e-9)


class TestSpectralCluster:
    def test_two_blobs_pure(self):
        pts, truth = two_blobs(n_per=30, separation=10.0, seed=0)
        assign = cl.spectral_cluster(pts, cl.SpectralConfig(seed=0))
        purity = max(
            (assign.labels == truth).mean(), (assign.labels != truth).mean()
        )
        assert purity == 1.0
        assert sum(assign.sizes) == 60

    def test_matches_knn_component_oracle_on_moons(self):
        rng = np.random.default_rng(2)
        t = rng.uniform(0, np.pi, 40)
        moon1 = np.stack([np.cos(t), np.sin(t)], axis=1)
        moon2 = np.stack([1.0 - np.cos(t), 0.6 - np.sin(t)], axis=1) + [0.0, 2.5]
        pts = np.vstack([moon1, moon2])
        cfg = cl.SpectralConfig(knn=5, seed=1)
        assign = cl.spectral_cluster(pts, cfg)

        # Oracle: connected components of the kNN union graph.
        S = cl.similarity(pts, cfg)
        adj = S > 0
        comp = -np.ones(80, dtype=int)
        cid = 0
        for start in range(80):
            if comp[start] >= 0:
                continue
            stack = [start]
            comp[start] = cid
            while stack:
                u = stack.pop()
                for v in np.flatnonzero(adj[u]):
                    if comp[v] < 0:
                        comp[v] = cid
                        stack.append(v)
            cid += 1
        assert cid == 2
        agree = (assign.labels == comp).mean()
        assert agree in (0.0, 1.0)

    def test_m_equals_k(self):
        pts = np.array([[0.0, 0.0], [5.0, 5.0]])
        assign = cl.spectral_cluster(pts, cl.SpectralConfig(knn=1, seed=0))
        assert sorted(assign.sizes) == [1, 1]

    def test_deterministic_under_seed(self):
        pts, _ = two_blobs(n_per=20, separation=2.0, seed=5)
        a = cl.spectral_cluster(pts, cl.SpectralConfig(seed=11)).labels
        b = cl.spectral_cluster(pts, cl.SpectralConfig(seed=11)).labels
        np.testing.assert_array_equal(a, b)


class TestLabelAnomalies:
    @pytest.mark.parametrize(
        "sizes,abnormal",
        [((11101, 204), 1), ((9309, 791), 1), ((204, 11101), 0)],
    )
    def test_smaller_cluster_is_abnormal(self, sizes, abnormal):
        labels = np.array([0] * sizes[0] + [1] * sizes[1])
        assign = cl.ClusterAssignment(labels=labels, sizes=list(sizes))
        verdicts = cl.label_anomalies(assign)
        assert verdicts.abnormal_cluster == abnormal
        assert int(verdicts.is_abnormal.sum()) == min(sizes)

    def test_tie_marks_cluster_zero_normal(self):
        labels = np.array([0] * 5 + [1] * 5)
        verdicts = cl.label_anomalies(cl.ClusterAssignment(labels=labels, sizes=[5, 5]))
        assert verdicts.abnormal_cluster == 1
        assert verdicts.verdict_strings()[0] == "Normal"

    def test_partition_and_imbalance_invariant(self):
        labels = np.array([0, 0, 0, 1, 0, 1])
        verdicts = cl.label_anomalies(cl.ClusterAssignment(labels=labels, sizes=[4, 2]))
        assert int(verdicts.is_abnormal.sum()) + 4 == 6
        assert verdicts.is_abnormal.sum() <= (~verdicts.is_abnormal).sum()

    def test_requires_two_clusters(self):
        assign = cl.ClusterAssignment(labels=np.zeros(3, dtype=int), sizes=[3])
        with pytest.raises(ContractViolation):
            cl.label_anomalies(assign)
