"""共通ユーティリティ（ロギング・並列実行）"""
