from .dump import EmbeddingDump, dump_embeddings, write_projection_csv
from .eigen import EigenResult, top_eigenpairs
from .isomap import IsomapResult, classical_mds, dijkstra, geodesic_distances, isomap, knn_graph
from .lambdas import LambdaLog, lambda_histogram, median_lambda, split_phases, write_histogram_csv
from .pca import pca_variance_coverage

__all__ = [
    "EigenResult",
    "EmbeddingDump",
    "IsomapResult",
    "LambdaLog",
    "classical_mds",
    "dijkstra",
    "dump_embeddings",
    "geodesic_distances",
    "isomap",
    "knn_graph",
    "lambda_histogram",
    "median_lambda",
    "pca_variance_coverage",
    "split_phases",
    "top_eigenpairs",
    "write_histogram_csv",
    "write_projection_csv",
]
