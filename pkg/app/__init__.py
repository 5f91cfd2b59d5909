"""
因果的CEOレート歪みツール - アプリケーションパッケージ
"""
