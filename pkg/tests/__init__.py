"""adini-fem のテスト"""
